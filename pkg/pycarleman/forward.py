""" Forward Module

    Holds the time dependent solver for the linearized Navier-Stokes system

        dv/dt - lap v + (A . grad) v + (v . grad) B + grad p = F,  div v = 0,
        v = 0 on the boundary,

    and the catalogue of manufactured problems used to verify it.

    Each step treats diffusion implicitly and both coefficient terms
    explicitly. Velocity and pressure are coupled through the Schur
    complement G^T H^-1 G (H = I/dt - lap on interior faces), solved by
    conjugate gradients, so every step satisfies the discrete momentum
    equation and div v = 0 to the solver tolerance.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import sympy as sym
from scipy.sparse.linalg import LinearOperator, cg, splu

from pycarleman.errors import ProjectionError, SolverError, StabilityError, ValidationError
from pycarleman.grid import (Field, TimeSeriesField, centre, edges, faces, integrate_spacetime,
                             lattice_shape, node, quadrature, with_cells, with_time_axis)
from pycarleman.operators import (PROJECTION_RTOL, advective, curl_potential, difference, divergence,
                                  gradient, kron_sum, l2_norm, laplacian, tridiagonal)

logger = logging.getLogger(__name__)

STABILITY_LIMIT = 0.5
DIVERGENCE_TOLERANCE = 1e-9
RESIDUAL_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class ForwardProblem:
    """ Data of one forward run, viscosity fixed at 1

    Attributes:
        grid: Grid
        A: advecting coefficient, face TimeSeriesField over every time node
        B: reacting coefficient, face TimeSeriesField over every time node
        F: source, face TimeSeriesField over every time node
        v0: initial velocity, divergence free face Field with zero walls
    """
    grid: object
    A: TimeSeriesField
    B: TimeSeriesField
    F: TimeSeriesField
    v0: Field

    def __post_init__(self):
        grid = self.grid
        for name in ("A", "B", "F"):
            series = getattr(self, name)
            if series.grid != grid:
                raise ValidationError("{} lives on another grid".format(name))
            if series.stags != faces(grid.dim):
                raise ValidationError("{} must be a face field".format(name))
            if series.count != grid.time_steps + 1 or abs(series.dt - grid.dt) > 1e-12 * grid.dt:
                raise ValidationError("{} must be sampled at every time node".format(name))
            if not all(np.all(np.isfinite(v)) for v in series.values):
                raise ValidationError("{} has non finite samples".format(name))
        if self.v0.grid != grid or self.v0.stags != faces(grid.dim) or self.v0.batch_shape:
            raise ValidationError("Initial velocity must be one face snapshot on the grid")
        v0 = Field(grid, self.v0.stags, self.v0.values, "dirichlet")
        object.__setattr__(self, "v0", v0)
        div = divergence(v0).values[0]
        scale = v0.max_abs() / grid.h_min
        if np.max(np.abs(div)) > DIVERGENCE_TOLERANCE * max(scale, 1e-300):
            raise ValidationError("Initial velocity is not divergence free (max |div| = {:.3e})"
                                  .format(float(np.max(np.abs(div)))))

    def with_source(self, F):
        return ForwardProblem(self.grid, self.A, self.B, F, self.v0)


@dataclass(frozen=True, eq=False)
class Solution:
    """ Output of solve_forward

    Attributes:
        v: velocity series
        p: mean free pressure series (the first snapshot copies the second)
        divergence: L2 norm of div v per time node
        iterations: pressure iterations per step
    """
    v: TimeSeriesField
    p: TimeSeriesField
    divergence: np.ndarray
    iterations: list = field(default_factory=list)


def zero_series(grid, stags=None, bc="none"):
    """ All zero series over every time node """
    stags = faces(grid.dim) if stags is None else stags
    values = tuple(np.zeros((grid.time_steps + 1,) + lattice_shape(grid, s)) for s in stags)
    return TimeSeriesField(grid, tuple(stags), values, grid.dt, 0.0, bc)


def zero_velocity(grid):
    return Field(grid, faces(grid.dim),
                 tuple(np.zeros(lattice_shape(grid, s)) for s in faces(grid.dim)), "dirichlet")


def _interior(grid, k):
    """ Slice of the unknown faces of component k (walls removed along axis k) """
    return tuple(slice(1, -1) if axis == k else slice(None) for axis in range(grid.dim))


class _StepOperators:
    """ Sparse pieces of one time step on a fixed grid """

    def __init__(self, grid):
        self.grid = grid
        self.factors = []
        self.gradients = []
        self.shapes = []
        centres = [n for n in grid.cells]
        for k in range(grid.dim):
            blocks = []
            grads = []
            for axis, (n, h) in enumerate(zip(grid.cells, grid.spacing)):
                if axis == k:
                    blocks.append(tridiagonal(n - 1, h))
                    grads.append(sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1],
                                          shape=(n - 1, n), format="csr") / h)
                else:
                    blocks.append(tridiagonal(n, h, corner=-3.0))
                    grads.append(sp.identity(n, format="csr"))
            lap = kron_sum(blocks)
            size = lap.shape[0]
            helmholtz = (sp.identity(size, format="csr") / grid.dt - lap).tocsc()
            self.factors.append(splu(helmholtz))
            grad = grads[0]
            for block in grads[1:]:
                grad = sp.kron(grad, block, format="csr")
            self.gradients.append(grad)
            self.shapes.append(tuple(n - 1 if axis == k else n for axis, n in enumerate(grid.cells)))
        self.pressure_size = int(np.prod(centres))

    def solve(self, k, rhs):
        return self.factors[k].solve(rhs)

    def schur(self):
        def matvec(x):
            total = np.zeros(self.pressure_size)
            for k, grad in enumerate(self.gradients):
                total += grad.T @ self.solve(k, grad @ x)
            return total
        return LinearOperator((self.pressure_size, self.pressure_size), matvec=matvec, dtype=np.float64)


@functools.lru_cache(maxsize=8)
def _step_operators(grid):
    return _StepOperators(grid)


def stability_number(problem):
    """ dt (|A|_inf / h + |grad B|_inf), must stay below 0.5 """
    grid = problem.grid
    a_max = problem.A.max_abs()
    b_max = 0.0
    for value, stag in zip(problem.B.values, problem.B.stags):
        for axis, h in enumerate(grid.spacing):
            d, _ = difference(value, stag, axis, h, "none")
            if d.size:
                b_max = max(b_max, float(np.max(np.abs(d))))
    return grid.dt * (a_max / grid.h_min + b_max)


def solve_forward(problem, rtol=PROJECTION_RTOL):
    """ Marches the linearized system over the time axis of the grid

    Args:
        problem: ForwardProblem
        rtol: relative residual of the pressure iteration
    Returns:
        Solution
    Raises:
        StabilityError: explicit terms violate dt (|A|/h + |grad B|) <= 0.5
        ProjectionError: pressure iteration hit its cap
        SolverError: divergence left above tolerance
    """
    grid = problem.grid
    number = stability_number(problem)
    if number > STABILITY_LIMIT:
        raise StabilityError("Time step too large: dt (|A|/h + |grad B|) = {:.3f} > {}"
                             .format(number, STABILITY_LIMIT))
    ops = _step_operators(grid)
    stags = faces(grid.dim)
    steps = grid.time_steps
    dt = grid.dt
    velocity = [np.zeros((steps + 1,) + lattice_shape(grid, s)) for s in stags]
    for k in range(grid.dim):
        velocity[k][0] = problem.v0.values[k]
    centre_shape = lattice_shape(grid, centre(grid.dim))
    pressure = np.zeros((steps + 1,) + centre_shape)
    div_norms = np.zeros(steps + 1)
    div_norms[0] = l2_norm(divergence(problem.v0))
    iterations = []
    schur = ops.schur()
    p_prev = np.zeros(ops.pressure_size)
    for n in range(steps):
        current = Field(grid, stags, tuple(v[n] for v in velocity), "dirichlet")
        transport = advective(problem.A.snapshot(n), current)
        reaction = advective(current, problem.B.snapshot(n))
        provisional = []
        b = np.zeros(ops.pressure_size)
        for k in range(grid.dim):
            inner = _interior(grid, k)
            rhs = (current.values[k][inner] / dt + problem.F.values[k][n + 1][inner]
                   - transport.values[k][inner] - reaction.values[k][inner])
            star = ops.solve(k, rhs.ravel())
            provisional.append(star)
            b += ops.gradients[k].T @ star
        b -= b.mean()
        count = [0]

        def _count(_):
            count[0] += 1

        p, info = cg(schur, b, x0=p_prev, rtol=rtol, maxiter=10 * ops.pressure_size, callback=_count)
        if info > 0:
            raise ProjectionError("Pressure iteration did not converge at step {} ({} iterations)"
                                  .format(n + 1, info))
        if info < 0:
            raise ProjectionError("Pressure iteration broke down at step {}".format(n + 1))
        p = p - p.mean()
        star_norm = 0.0
        for k in range(grid.dim):
            inner = _interior(grid, k)
            corrected = provisional[k] - ops.solve(k, ops.gradients[k] @ p)
            velocity[k][n + 1][inner] = corrected.reshape(ops.shapes[k])
            star_norm += float(np.sum(provisional[k] ** 2))
        pressure[n + 1] = p.reshape(centre_shape)
        p_prev = p
        iterations.append(count[0])
        following = Field(grid, stags, tuple(v[n + 1] for v in velocity), "dirichlet")
        div_norms[n + 1] = l2_norm(divergence(following))
        scale = max(l2_norm(following), np.sqrt(star_norm * np.prod(grid.spacing)))
        if div_norms[n + 1] > DIVERGENCE_TOLERANCE * scale:
            raise SolverError("Divergence {:.3e} above tolerance at step {}".format(div_norms[n + 1], n + 1))
        logger.debug("step %d: %d pressure iterations, |div v| = %.3e", n + 1, count[0], div_norms[n + 1])
    pressure[0] = pressure[1]
    v = TimeSeriesField(grid, stags, tuple(velocity), dt, 0.0, "dirichlet")
    p = TimeSeriesField(grid, (centre(grid.dim),), (pressure,), dt, 0.0, "neumann")
    return Solution(v=v, p=p, divergence=div_norms, iterations=iterations)


@dataclass(frozen=True, eq=False)
class ResidualReport:
    """ Per step residuals of the discrete system

    Attributes:
        momentum: L2 norm of the momentum residual on interior faces, steps 1..N_t
        divergence: L2 norm of div v, every time node
        relative: momentum residual over the size of its largest term
    """
    momentum: np.ndarray
    divergence: np.ndarray
    relative: np.ndarray

    @property
    def passed(self):
        return bool(np.max(self.relative, initial=0.0) <= RESIDUAL_TOLERANCE)

    def as_dict(self):
        return {
            "max_momentum": float(np.max(self.momentum, initial=0.0)),
            "max_relative": float(np.max(self.relative, initial=0.0)),
            "max_divergence": float(np.max(self.divergence, initial=0.0)),
            "passed": self.passed,
        }


def _interior_norm(field_):
    total = 0.0
    for value, stag in zip(field_.values, field_.stags):
        mask = field_.grid.mask("interior", stag)
        total += quadrature(value ** 2, field_.grid, stag, mask)
    return float(np.sqrt(total))


def momentum_residual(v_next, v_prev, p_next, A, B, F_next, dt):
    """ Discrete momentum residual of one backward Euler step, as a face Field """
    lap = laplacian(v_next)
    transport = advective(A, v_prev)
    reaction = advective(v_prev, B)
    grad_p = gradient(p_next, "neumann")
    values = tuple((a - b) / dt - l + t + r + g - f for a, b, l, t, r, g, f in
                   zip(v_next.values, v_prev.values, lap.values, transport.values,
                       reaction.values, grad_p.values, F_next.values))
    terms = (v_next.scaled(1.0 / dt), v_prev.scaled(1.0 / dt), lap, transport, reaction, grad_p, F_next)
    return v_next.with_values(values, bc="none"), terms


def residual_check(sol, problem):
    """ Momentum and divergence residuals of a solution, step by step

    Args:
        sol: Solution (or any velocity/pressure pair packed as one)
        problem: ForwardProblem it should solve
    Returns:
        ResidualReport
    """
    grid = problem.grid
    if sol.v.count != grid.time_steps + 1 or sol.p.count != grid.time_steps + 1:
        raise ValidationError("Solution does not cover the time axis of the problem")
    momentum = np.zeros(grid.time_steps)
    relative = np.zeros(grid.time_steps)
    div_norms = np.zeros(grid.time_steps + 1)
    for n in range(grid.time_steps + 1):
        div_norms[n] = l2_norm(divergence(sol.v.snapshot(n)))
    for n in range(grid.time_steps):
        residual, terms = momentum_residual(sol.v.snapshot(n + 1), sol.v.snapshot(n), sol.p.snapshot(n + 1),
                                            problem.A.snapshot(n), problem.B.snapshot(n),
                                            problem.F.snapshot(n + 1), grid.dt)
        momentum[n] = _interior_norm(residual)
        scale = max(_interior_norm(term) for term in terms)
        relative[n] = momentum[n] / scale if scale > 0 else 0.0
    return ResidualReport(momentum=momentum, divergence=div_norms, relative=relative)


# Manufactured problems

TIME_PROFILES = ("steady", "pulse", "decay")
CATALOG = ("stokes-steady", "stokes-pulse", "stokes-decay", "stokes-mode2",
           "oseen-steady", "oseen-pulse", "oseen-decay", "oseen-mode2")
PRESSURE_AMPLITUDE = 0.5
COEFFICIENT_SCALE = 0.1


def catalogue():
    """ Names of the manufactured problems """
    return list(CATALOG)


def _time_profile(kind, t, T):
    if kind == "steady":
        return sym.Integer(1)
    if kind == "pulse":
        return sym.sin(2 * sym.pi * t / T)
    if kind == "decay":
        return sym.exp(-t)
    raise ValidationError("Unknown time profile {}".format(kind))


def _parse_name(name):
    if name not in CATALOG:
        raise ValidationError("Unknown manufactured problem {}, expected one of {}".format(name, CATALOG))
    family, variant = name.split("-")
    if variant == "mode2":
        return family == "oseen", "decay", 2
    return family == "oseen", variant, 1


@dataclass(frozen=True, eq=False)
class ManufacturedCase:
    """ A manufactured problem with its exact discrete solution

    Attributes:
        name: catalogue id
        problem: ForwardProblem
        exact: Solution holding the sampled exact velocity and pressure
        expressions: sympy expressions of q, v, p, A, B and F
    """
    name: str
    problem: ForwardProblem
    exact: Solution
    expressions: dict


def _sample(expr, symbols, grid, stag, times):
    """ Evaluates an expression of (x..., t) on a lattice for every time """
    fn = sym.lambdify(symbols, expr, "numpy")
    mesh = grid.mesh(stag)
    spread = (slice(None),) + (np.newaxis,) * grid.dim
    args = [x[np.newaxis] for x in mesh] + [np.asarray(times)[spread]]
    shape = (len(times),) + mesh[0].shape
    return np.array(np.broadcast_to(fn(*args), shape), dtype=np.float64)


def manufactured_problem(name, grid, coefficient_scale=COEFFICIENT_SCALE):
    """ Builds a manufactured problem and its exact solution

    The velocity is the curl of q = prod sin^2(k pi x_i / L_i) tau(t)
    (2D stream function, 3D potential (q, q, q)), hence divergence free
    with zero walls; p = 0.5 prod cos(pi x_i / L_i) tau(t) is mean free.
    F is obtained by substitution into the momentum equation.

    Args:
        name: catalogue id
        grid: Grid
        coefficient_scale: size of A and B in the oseen variants
    Returns:
        ManufacturedCase
    Raises:
        ValidationError: unknown id
    """
    oseen, profile, mode = _parse_name(name)
    dim = grid.dim
    xs = sym.symbols("x0:{}".format(dim), real=True)
    t = sym.Symbol("t", real=True)
    tau = _time_profile(profile, t, grid.T)
    shape = sym.Integer(1)
    pressure_shape = sym.Integer(1)
    for axis, (x, length) in enumerate(zip(xs, grid.extent)):
        wave = mode if axis == 0 else 1
        shape *= sym.sin(wave * sym.pi * x / length) ** 2
        pressure_shape *= sym.cos(sym.pi * x / length)
    q = shape * tau
    if dim == 2:
        v = [sym.diff(q, xs[1]), -sym.diff(q, xs[0])]
    else:
        v = [sym.diff(q, xs[(k + 1) % 3]) - sym.diff(q, xs[(k + 2) % 3]) for k in range(3)]
    p = PRESSURE_AMPLITUDE * pressure_shape * tau
    if oseen:
        growth = 1 + t / (2 * grid.T)
        A = [coefficient_scale * sym.cos(sym.pi * xs[(k + 1) % dim] / grid.extent[(k + 1) % dim]) * growth
             for k in range(dim)]
        B = [coefficient_scale * sym.sin(sym.pi * xs[k] / grid.extent[k])
             * sym.cos(sym.pi * xs[(k + 1) % dim] / grid.extent[(k + 1) % dim]) * growth
             for k in range(dim)]
    else:
        A = [sym.Integer(0)] * dim
        B = [sym.Integer(0)] * dim
    F = []
    for k in range(dim):
        expr = sym.diff(v[k], t) - sum(sym.diff(v[k], x, 2) for x in xs)
        expr += sum(A[j] * sym.diff(v[k], xs[j]) for j in range(dim))
        expr += sum(v[j] * sym.diff(B[k], xs[j]) for j in range(dim))
        expr += sym.diff(p, xs[k])
        F.append(expr)
    symbols = list(xs) + [t]
    times = grid.times
    stags = faces(dim)

    def series(exprs, bc="none"):
        values = tuple(_sample(e, symbols, grid, s, times) for e, s in zip(exprs, stags))
        return TimeSeriesField(grid, stags, values, grid.dt, 0.0, bc)

    # exact discrete velocity: curl of the sampled potential, walls zeroed
    if dim == 2:
        potential_stag = node(2)
        q_values = _sample(shape, symbols, grid, potential_stag, [0.0])[0]
        q_values[grid.mask("boundary", potential_stag)] = 0.0
        potential = Field(grid, (potential_stag,), (q_values,))
    else:
        q_parts = []
        for stag in edges(3):
            part = _sample(shape, symbols, grid, stag, [0.0])[0]
            part[grid.mask("boundary", stag)] = 0.0
            q_parts.append(part)
        potential = Field(grid, edges(3), tuple(q_parts))
    spatial = curl_potential(potential)
    tau_values = _sample(tau, symbols, grid, stags[0], times)[(slice(None),) + (0,) * dim]
    spread = (slice(None),) + (np.newaxis,) * dim
    exact_v = TimeSeriesField(grid, stags, tuple(tau_values[spread] * s for s in spatial.values),
                              grid.dt, 0.0, "dirichlet")
    exact_p = TimeSeriesField(grid, (centre(dim),),
                              (_sample(p, symbols, grid, centre(dim), times),), grid.dt, 0.0, "neumann")
    problem = ForwardProblem(grid, series(A), series(B), series(F), exact_v.snapshot(0))
    exact = Solution(v=exact_v, p=exact_p, divergence=np.array([l2_norm(divergence(exact_v.snapshot(n)))
                                                               for n in range(exact_v.count)]))
    expressions = {"q": q, "v": v, "p": p, "A": A, "B": B, "F": F}
    return ManufacturedCase(name=name, problem=problem, exact=exact, expressions=expressions)


def series_distance(a, b, region="domain"):
    """ L2(Q) distance between two series on one layout """
    total = 0.0
    for x, y, stag in zip(a.values, b.values, a.stags):
        total += integrate_spacetime((x - y) ** 2, a.grid, stag, region, dt=a.dt)
    return float(np.sqrt(total))


@dataclass(frozen=True)
class ConvergenceReport:
    """ Observed convergence of the forward solver

    Attributes:
        kind: space or time
        sizes: cells (space) or time steps (time) per run
        errors: L2(Q) error against the exact solution (space) or successive
            differences between runs (time)
        ratios: error ratio per refinement
        orders: observed orders log2(ratio)
    """
    kind: str
    sizes: list
    errors: list
    ratios: list
    orders: list

    def as_dict(self):
        return {"kind": self.kind, "sizes": self.sizes, "errors": self.errors,
                "ratios": self.ratios, "orders": self.orders}


def _report(kind, sizes, errors):
    ratios = [a / b if b > 0 else float("inf") for a, b in zip(errors[:-1], errors[1:])]
    orders = [float(np.log2(r)) if np.isfinite(r) and r > 0 else float("nan") for r in ratios]
    return ConvergenceReport(kind=kind, sizes=list(sizes), errors=[float(e) for e in errors],
                             ratios=ratios, orders=orders)


def convergence_study(name, grid, cells_list=None, steps_list=None):
    """ Observed orders of the forward solver on a manufactured problem

    With cells_list the spatial error against the exact solution is
    measured at each resolution. With steps_list (each the double of the
    previous) the temporal order comes from successive differences
    |v_dt - v_dt/2| / |v_dt/2 - v_dt/4| on the coarsest time nodes.

    Returns:
        ConvergenceReport
    Raises:
        ValidationError: neither or both lists given, or too short
    """
    if (cells_list is None) == (steps_list is None):
        raise ValidationError("Give exactly one of cells_list and steps_list")
    if cells_list is not None:
        if len(cells_list) < 2:
            raise ValidationError("Spatial study needs at least 2 resolutions")
        errors = []
        for cells in cells_list:
            case = manufactured_problem(name, with_cells(grid, cells))
            sol = solve_forward(case.problem)
            errors.append(series_distance(sol.v, case.exact.v))
            logger.info("%s at %s cells: error %.3e", name, cells, errors[-1])
        return _report("space", cells_list, errors)
    if len(steps_list) < 3:
        raise ValidationError("Temporal study needs at least 3 step counts")
    for coarse, fine in zip(steps_list[:-1], steps_list[1:]):
        if fine != 2 * coarse:
            raise ValidationError("Step counts must double, got {}".format(steps_list))
    runs = []
    for steps in steps_list:
        case = manufactured_problem(name, with_time_axis(grid, grid.T, steps))
        runs.append(solve_forward(case.problem).v)
    base = steps_list[0]
    coarse_runs = []
    for steps, v in zip(steps_list, runs):
        stride = steps // base
        coarse_runs.append(TimeSeriesField(v.grid, v.stags, tuple(value[::stride] for value in v.values),
                                           v.dt * stride, v.start, v.bc))
    errors = [series_distance(a, b) for a, b in zip(coarse_runs[:-1], coarse_runs[1:])]
    return _report("time", steps_list[:-1], errors)
