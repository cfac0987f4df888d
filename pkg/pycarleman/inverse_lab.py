""" Inverse Lab Module

    Holds the end to end experiments around the stability of the inverse
    source problem: admissible source sampling and certification, the
    stability ratio study, the gradient source obstruction, the two worked
    source examples and the rot identity at t0.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from pycarleman.errors import InadmissibleError, NumericalError, ValidationError
from pycarleman.forward import ForwardProblem, solve_forward, zero_series, zero_velocity
from pycarleman.grid import (Field, TimeSeriesField, build_subdomains, bump, centre, constant_series, edges,
                             faces, lattice_shape, node, with_time_axis)
from pycarleman.operators import (NormSpec, advective, curl_potential, divergence, gradient, interpolate_array,
                                  l2_norm, laplacian, rot, sobolev_norm, time_derivative_array)
from pycarleman.util import worker_count

logger = logging.getLogger(__name__)

PROFILES = ("linear", "gaussian", "oscillating")
CLAUSES = ("divergence", "support_omega", "support_boundary", "alignment", "time_bound")
DIVERGENCE_TOLERANCE = 1e-9
ZERO_TOLERANCE = 1e-12
SIGMA_MARGIN = 0.9
BUMPS = 3
MIN_SOURCES = 2
OBSTRUCTION_CENTER = (0.15, 0.5, 0.5)
OBSTRUCTION_RADIUS = 0.1


@dataclass(frozen=True, eq=False)
class AdmissibleSource:
    """ A source together with its admissibility certificate

    Attributes:
        id: source id, unique within an experiment
        F: face series over every time node
        M: bound constant of the time derivative clause
        certificate: output of check_admissible
        sigma: time profile strength
        profile: time profile family
        seed: generator seed
    """
    id: str
    F: TimeSeriesField
    M: float
    certificate: dict
    sigma: float = 0.0
    profile: str = "linear"
    seed: int = None

    @property
    def admissible(self):
        return self.certificate["passed"]

    def scaled(self, factor):
        F = self.F.scaled(factor)
        return AdmissibleSource(id=self.id, F=F, M=self.M, certificate=check_admissible(F, self.M),
                                sigma=self.sigma, profile=self.profile, seed=self.seed)


def _collar(grid, k):
    return 2 * grid.spacing[k]


def check_support_box(grid, box):
    """ Validates a source support box against omega and the boundary collar

    Raises:
        InadmissibleError: box leaves [2h, L - 2h] or overlaps omega
    """
    if len(box) != grid.dim:
        raise InadmissibleError("Support box needs {} intervals".format(grid.dim))
    tol = 1e-12
    for k, ((lo, hi), length) in enumerate(zip(box, grid.extent)):
        if not lo < hi:
            raise InadmissibleError("Support box {} is empty on axis {}".format(box, k))
        if lo < _collar(grid, k) - tol or hi > length - _collar(grid, k) + tol:
            raise InadmissibleError("Support box {} enters the boundary collar".format(box))
    if grid.omega is None:
        raise InadmissibleError("Subdomain omega has not been built")
    separated = any(hi <= o_lo + tol or lo >= o_hi - tol
                    for (lo, hi), (o_lo, o_hi) in zip(box, grid.omega))
    if not separated:
        raise InadmissibleError("Support box {} overlaps omega {}".format(box, grid.omega))
    return tuple((float(lo), float(hi)) for lo, hi in box)


def default_support_box(grid):
    """ Widest box between the boundary collar and omega """
    best = None
    for axis, ((lo, hi), length) in enumerate(zip(grid.omega, grid.extent)):
        collar = _collar(grid, axis)
        for a, b in ((collar, lo), (hi, length - collar)):
            if best is None or b - a > best[2] - best[1]:
                best = (axis, a, b)
    axis, a, b = best
    if b - a <= 0:
        raise InadmissibleError("No room for a source between the collar and omega")
    box = [(_collar(grid, k), length - _collar(grid, k)) for k, length in enumerate(grid.extent)]
    box[axis] = (a, b)
    return tuple(box)


def _profile_shape(profile, times, t0, T):
    """ g(t) = (t - t0) rho(t), theta = 1 + sigma g """
    shift = times - t0
    if profile == "linear":
        rho = np.ones_like(times)
    elif profile == "gaussian":
        rho = np.exp(-(shift / (T / 4.0)) ** 2)
    elif profile == "oscillating":
        rho = np.cos(2.0 * np.pi * shift / T)
    else:
        raise ValidationError("Unknown time profile {}, expected one of {}".format(profile, PROFILES))
    return shift * rho


def profile_constant(profile, grid):
    """ K = max over k = 1, 2 of the discrete max |d^k g / dt^k| """
    g = _profile_shape(profile, grid.times, grid.t0, grid.T)
    return max(float(np.max(np.abs(time_derivative_array(g, grid.dt, k)))) for k in (1, 2))


def time_profile(profile, grid, M, sigma=None):
    """ Samples theta(t) = 1 + sigma (t - t0) rho(t)

    Args:
        profile: linear, gaussian or oscillating
        grid: Grid
        M: bound constant
        sigma: profile strength, 0.9 M / K when None
    Returns:
        (theta samples, sigma)
    Raises:
        InadmissibleError: sigma K > M, naming the smallest feasible M
    """
    if M < 0:
        raise InadmissibleError("M must be non negative, got {}".format(M))
    g = _profile_shape(profile, grid.times, grid.t0, grid.T)
    K = profile_constant(profile, grid)
    if sigma is None:
        sigma = SIGMA_MARGIN * M / K if K > 0 else 0.0
    elif abs(sigma) * K > M * (1 + 1e-12):
        raise InadmissibleError("M = {} too small for the {} profile with sigma = {}, needs M >= {:.6g}"
                                .format(M, profile, sigma, abs(sigma) * K))
    return 1.0 + sigma * g, float(sigma)


def _potential(grid, rng, box, amplitude):
    """ Random potential whose curl is supported inside the box """
    h = max(grid.spacing)
    half = min(hi - lo for lo, hi in box) / 2.0
    largest = 0.9 * (half - h)
    if largest < 2 * h:
        raise InadmissibleError("Support box {} is too small for a resolved source".format(box))
    stags = (node(2),) if grid.dim == 2 else edges(3)
    values = [np.zeros(lattice_shape(grid, stag)) for stag in stags]
    for _ in range(BUMPS):
        radius = float(rng.uniform(max(2 * h, 0.5 * largest), largest))
        reach = radius + h
        center = [float(rng.uniform(lo + reach, hi - reach)) for lo, hi in box]
        weight = float(rng.uniform(0.5, 1.5)) * float(rng.choice([-1.0, 1.0]))
        directions = rng.uniform(-1.0, 1.0, size=len(stags))
        for k, stag in enumerate(stags):
            values[k] += amplitude * weight * directions[k] * radius * bump(grid, stag, center, radius)
    return Field(grid, stags, tuple(values))


def sample_admissible(grid, seed, M=5.0, amplitude=1.0, support=None, profile="linear", sigma=None):
    """ Draws a random admissible source F(x, t) = rot q(x) theta(t)

    Args:
        grid: Grid with subdomains
        seed: generator seed
        M: bound constant of the time derivative clause
        amplitude: scale of the potential
        support: box holding the support, the widest free box when None
        profile: time profile family
        sigma: time profile strength, calibrated from M when None
    Returns:
        AdmissibleSource
    Raises:
        InadmissibleError: support box or M infeasible
    """
    box = default_support_box(grid) if support is None else check_support_box(grid, support)
    theta, sigma = time_profile(profile, grid, M, sigma)
    rng = np.random.default_rng(seed)
    spatial = curl_potential(_potential(grid, rng, box, amplitude))
    spread = (slice(None),) + (np.newaxis,) * grid.dim
    values = tuple(theta[spread] * value[np.newaxis] for value in spatial.values)
    F = TimeSeriesField(grid, faces(grid.dim), values, grid.dt, 0.0, "dirichlet")
    certificate = check_admissible(F, M)
    logger.debug("sampled source seed=%s sigma=%.4g passed=%s", seed, sigma, certificate["passed"])
    return AdmissibleSource(id="seed-{:04d}".format(int(seed)), F=F, M=float(M), certificate=certificate,
                            sigma=sigma, profile=profile, seed=int(seed))


def _t0_slot(series):
    index = int(round((series.grid.t0 - series.start) / series.dt))
    if not 0 <= index < series.count:
        raise ValidationError("Series does not contain t0 = {}".format(series.grid.t0))
    return index


def _clause(residual, passed):
    return {"residual": float(residual), "passed": bool(passed)}


def time_ratio(F, index=None):
    """ max over k = 1, 2, components and nodes of |d^k F / dt^k| / |F(t0)| where F(t0) != 0 """
    index = _t0_slot(F) if index is None else index
    worst = 0.0
    for value in F.values:
        at_t0 = np.abs(value[index])
        support = at_t0 > ZERO_TOLERANCE * max(float(np.max(at_t0, initial=0.0)), 1e-300)
        if not support.any():
            continue
        for k in (1, 2):
            derivative = np.abs(time_derivative_array(value, F.dt, k))
            worst = max(worst, float(np.max(derivative[:, support] / at_t0[support])))
    return worst


def check_admissible(F, M, grid=None):
    """ Evaluates every clause of the admissible set on a face series

    Clauses: divergence (div F(t0) = 0), support_omega (F = 0 on omega),
    support_boundary (F = 0 on the collar), alignment (F = 0 wherever
    F(t0) = 0) and time_bound (|d^k F| <= M |F(t0)|, k = 1, 2,
    componentwise on the face lattices).

    Args:
        F: face TimeSeriesField
        M: bound constant
        grid: Grid, F.grid when None
    Returns:
        dict of clause -> {residual, passed} plus an overall passed flag
    """
    grid = F.grid if grid is None else grid
    if F.stags != faces(grid.dim):
        raise ValidationError("Sources must be face series")
    index = _t0_slot(F)
    scale = F.max_abs()
    snapshot = F.snapshot(index)
    snapshot_scale = snapshot.max_abs()
    div = float(np.max(np.abs(divergence(snapshot).values[0])))
    clauses = {"divergence": _clause(div, div <= DIVERGENCE_TOLERANCE * snapshot_scale / grid.h_min)}
    for name, region in (("support_omega", "omega"), ("support_boundary", "collar")):
        worst = 0.0
        for value, stag in zip(F.values, F.stags):
            mask = grid.mask(region, stag)
            if mask.any():
                worst = max(worst, float(np.max(np.abs(value[:, mask]))))
        clauses[name] = _clause(worst, worst <= ZERO_TOLERANCE * scale)
    misaligned = 0.0
    for value in F.values:
        outside = np.abs(value[index]) <= ZERO_TOLERANCE * max(snapshot_scale, 1e-300)
        if outside.any():
            misaligned = max(misaligned, float(np.max(np.abs(value[:, outside]))))
    clauses["alignment"] = _clause(misaligned, misaligned <= ZERO_TOLERANCE * scale)
    ratio = time_ratio(F, index)
    clauses["time_bound"] = _clause(ratio, ratio <= M * (1 + 1e-9))
    clauses["passed"] = all(clauses[name]["passed"] for name in CLAUSES)
    clauses["M"] = float(M)
    return clauses


def failed_clauses(certificate):
    return [name for name in CLAUSES if not certificate[name]["passed"]]


def _window(series, window):
    """ Snapshot indices of [eps, T - eps] """
    if window is None or window <= 0:
        return None
    margin = int(round(window / series.dt))
    lo, hi = margin, series.count - 1 - margin
    if not lo < hi:
        raise ValidationError("Observation window margin {} leaves no time interval".format(window))
    return lo, hi


def data_norm(v, window=None):
    """ D = |v|_{H2(0,T; H1(omega))} + |v(t0)|_{H2(domain)}

    Args:
        v: velocity series over the grid's time axis
        window: margin eps; the time norm then runs over [eps, T - eps]
    """
    observed = sobolev_norm(v, NormSpec(2, "H1", "omega"), window=_window(v, window))
    final = sobolev_norm(v, NormSpec(0, "H2", "domain", "fixed"), t_index=_t0_slot(v))
    return observed + final


def source_norm(F):
    """ |F|_{H2(0,T; L2(domain))} """
    return sobolev_norm(F, NormSpec(2, "L2", "domain"))


@dataclass(frozen=True)
class StabilityRow:
    source_id: str
    source_norm: float = 0.0
    data_norm: float = 0.0
    ratio: float = None
    iterations: int = 0
    max_divergence: float = 0.0
    failed: bool = False
    degenerate: bool = False
    message: str = ""

    def as_dict(self):
        return {"source_id": self.source_id, "source_norm": self.source_norm, "data_norm": self.data_norm,
                "ratio": "" if self.ratio is None else self.ratio, "iterations": self.iterations,
                "max_divergence": self.max_divergence, "failed": self.failed,
                "degenerate": self.degenerate, "message": self.message}


@dataclass(frozen=True, eq=False)
class StabilityResult:
    rows: list
    summary: dict = field(default_factory=dict)


def zero_template(grid):
    """ Problem with A = B = 0, v0 = 0 and no source """
    zero = zero_series(grid)
    return ForwardProblem(grid, zero, zero, zero, zero_velocity(grid))


def _stability_row(source, template, window):
    try:
        sol = solve_forward(template.with_source(source.F))
    except NumericalError as error:
        logger.warning("source %s failed: %s", source.id, error)
        return StabilityRow(source_id=source.id, failed=True, message=str(error))
    norm_F = source_norm(source.F)
    D = data_norm(sol.v, window)
    degenerate = D == 0.0
    return StabilityRow(source_id=source.id, source_norm=norm_F, data_norm=D,
                        ratio=None if degenerate else norm_F / D,
                        iterations=max(sol.iterations, default=0),
                        max_divergence=float(np.max(sol.divergence)), degenerate=degenerate)


def summarize(rows):
    """ max, median and max/median spread over the usable rows """
    ratios = [r.ratio for r in rows if not r.failed and r.ratio is not None]
    summary = {"rows": len(rows), "used": len(ratios),
               "failed": [r.source_id for r in rows if r.failed],
               "degenerate": [r.source_id for r in rows if r.degenerate],
               "max_ratio": None, "median_ratio": None, "spread": None}
    if ratios:
        largest, median = float(np.max(ratios)), float(np.median(ratios))
        summary.update(max_ratio=largest, median_ratio=median, spread=largest / median if median > 0 else None)
    return summary


def stability_experiment(sources, template=None, window=None, workers=None):
    """ Ratio |F| / D for every source, solved concurrently

    Args:
        sources: at least two AdmissibleSource objects with passing certificates
        template: ForwardProblem supplying A, B and v0 (zero when None)
        window: observation margin eps for D
        workers: pool size, capped by CNSF_THREADS
    Returns:
        StabilityResult, rows sorted by source id
    Raises:
        ValidationError: fewer than two sources
        InadmissibleError: a certificate fails
    """
    sources = list(sources)
    if len(sources) < MIN_SOURCES:
        raise ValidationError("need ≥ 2 sources")
    for source in sources:
        if not source.admissible:
            raise InadmissibleError("Source {} fails {}".format(source.id, failed_clauses(source.certificate)))
    template = zero_template(sources[0].F.grid) if template is None else template
    with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
        rows = list(pool.map(lambda s: _stability_row(s, template, window), sources))
    rows.sort(key=lambda r: r.source_id)
    summary = summarize(rows)
    logger.info("stability: %d rows, max ratio %s", len(rows), summary["max_ratio"])
    return StabilityResult(rows=rows, summary=summary)


def stability_curve(grid, parameter, values, seeds, M=5.0, amplitude=1.0, profile="linear", window=None,
                    workers=None):
    """ Maximum stability ratio as a function of M or of the size of omega

    For parameter "omega" each value is the half width of a centred omega
    box (omega0 half as wide).

    Returns:
        list of dicts with the parameter value, max and median ratio
    """
    if parameter not in ("M", "omega"):
        raise ValidationError("Stability curves sweep M or omega, got {}".format(parameter))
    curve = []
    for value in values:
        current, bound = grid, M
        if parameter == "M":
            bound = float(value)
        else:
            middle = [length / 2.0 for length in grid.extent]
            omega = tuple((c - value, c + value) for c in middle)
            omega0 = tuple((c - value / 2.0, c + value / 2.0) for c in middle)
            current = build_subdomains(grid, omega, omega0)
        sources = [sample_admissible(current, seed, bound, amplitude, profile=profile) for seed in seeds]
        summary = stability_experiment(sources, window=window, workers=workers).summary
        curve.append({"parameter": parameter, "value": float(value), "max_ratio": summary["max_ratio"],
                      "median_ratio": summary["median_ratio"]})
    return curve


def obstruction_source(grid, center=None, radius=None, amplitude=1.0):
    """ Centre field psi = amplitude * bump """
    if center is None:
        center = tuple(c * length for c, length in zip(OBSTRUCTION_CENTER, grid.extent))
    radius = OBSTRUCTION_RADIUS * min(grid.extent) if radius is None else radius
    stag = centre(grid.dim)
    return Field(grid, (stag,), (amplitude * bump(grid, stag, center, radius),), "neumann")


def obstruction_demo(grid, psi=None, M=5.0, window=None):
    """ Gradient source F = grad psi produces no velocity at all

    The exact discrete solution is v = 0 with pressure psi, so the data
    norm vanishes while |F| does not; only the divergence clause of the
    admissible set catches it.

    Args:
        grid: Grid with subdomains
        psi: centre scalar Field, the default bump when None
        M: bound constant for the certificate
        window: observation margin for D
    Returns:
        dict report
    Raises:
        ValidationError: psi reaches the boundary collar
    """
    psi = obstruction_source(grid) if psi is None else psi
    if psi.rank != "scalar" or psi.stags[0] != centre(grid.dim) or psi.batch_shape:
        raise ValidationError("psi must be one centre scalar snapshot")
    psi = Field(grid, psi.stags, psi.values, "neumann")
    F0 = gradient(psi)
    for value, stag in zip(F0.values, F0.stags):
        if np.any(np.abs(value[grid.mask("collar", stag)]) > 0):
            raise ValidationError("psi touches the boundary collar")
    F = constant_series(Field(grid, F0.stags, F0.values, "dirichlet"), grid.time_steps + 1, grid.dt)
    certificate = check_admissible(F, M)
    if psi.max_abs() == 0:
        return {"data_norm": 0.0, "source_norm": 0.0, "ratio": None, "failed_clauses": failed_clauses(certificate),
                "pressure_error": 0.0, "velocity_max": 0.0, "degenerate": True}
    sol = solve_forward(zero_template(grid).with_source(F))
    D = data_norm(sol.v, window)
    norm_F = source_norm(F)
    shifted = psi.values[0] - np.mean(psi.values[0])
    pressure = Field(grid, psi.stags, (sol.p.values[0][grid.t0_index] - shifted,))
    report = {"data_norm": D, "source_norm": norm_F, "ratio": norm_F / D if D > 0 else None,
              "failed_clauses": failed_clauses(certificate), "pressure_error": float(l2_norm(pressure)),
              "velocity_max": sol.v.max_abs(), "degenerate": False}
    logger.info("obstruction: D = %.3e, |F| = %.3e", D, norm_F)
    return report


def _cross_component(r, f, k):
    i, j = (k + 1) % 3, (k + 2) % 3
    return r[i] * f[j] - r[j] * f[i]


def _on(values, stags, target):
    return [interpolate_array(v, s, target, "none") for v, s in zip(values, stags)]


def example_ii_case(grid):
    """ r = (0, 0, 1 + t), f = (2 x1, 2 x2, 0) on the faces """
    if grid.dim != 3:
        raise ValidationError("Example (ii) lives on a 3D grid")
    stags = faces(3)
    count = grid.time_steps + 1
    spread = (slice(None),) + (np.newaxis,) * 3
    r = [np.zeros((count,) + lattice_shape(grid, s)) for s in stags]
    r[2] = (1.0 + grid.times)[spread] * np.ones((count,) + lattice_shape(grid, stags[2]))
    f = [2.0 * grid.mesh(stags[0])[0], 2.0 * grid.mesh(stags[1])[1], np.zeros(lattice_shape(grid, stags[2]))]
    return (TimeSeriesField(grid, stags, tuple(r), grid.dt),
            Field(grid, stags, tuple(f)))


def example_ii_check(r, f):
    """ Source F = r x f with rot r(t0) = 0, rot f = 0, f3 = 0

    Checks div(r x f) = f . rot r - r . rot f on interior cells at t0,
    the componentwise time bound of F, and the chain
    |r x f| >= |r3| (|f1| + |f2|) / sqrt 2 which gives
    M = sqrt 2 max |d^k r| / min |r3(t0)|.

    Args:
        r: face TimeSeriesField
        f: face Field
    Returns:
        dict report
    Raises:
        ValidationError: not 3D or f3 != 0
    """
    grid = r.grid
    if grid.dim != 3:
        raise ValidationError("Example (ii) needs a 3D grid")
    if np.any(f.values[2] != 0):
        raise ValidationError("f must have a vanishing third component")
    stags = faces(3)
    index = _t0_slot(r)
    # source on the faces, component k built on face k
    F = []
    for k, target in enumerate(stags):
        r_k = _on(r.values, r.stags, target)
        f_k = _on(f.values, f.stags, target)
        F.append(_cross_component(r_k, [v[np.newaxis] for v in f_k], k))
    F = TimeSeriesField(grid, stags, tuple(F), r.dt, r.start)
    r0 = Field(grid, stags, tuple(v[index] for v in r.values))
    cells = centre(3)
    div_F = divergence(F.snapshot(index)).values[0]
    rot_r = rot(r0)
    rot_f = rot(f)
    f_c = _on(f.values, f.stags, cells)
    r_c = _on(r0.values, r0.stags, cells)
    rhs = (sum(a * b for a, b in zip(f_c, _on(rot_r.values, rot_r.stags, cells)))
           - sum(a * b for a, b in zip(r_c, _on(rot_f.values, rot_f.stags, cells))))
    inner = tuple(slice(1, -1) for _ in range(3))
    identity = float(np.max(np.abs(div_F - rhs)[inner], initial=0.0))
    # chain bound at the cell centres, where the algebra is exact
    r_series = _on(r.values, r.stags, cells)
    f_series = [v[np.newaxis] for v in f_c]
    F_c = np.stack([_cross_component(r_series, f_series, k) for k in range(3)], axis=-1)
    min_r3 = float(np.min(np.abs(r_series[2][index])))
    applicable = min_r3 > 0
    slope = max(float(np.max(np.linalg.norm(np.stack([time_derivative_array(v, r.dt, k) for v in r_series],
                                                      axis=-1), axis=-1))) for k in (1, 2))
    chain = np.sqrt(2.0) * slope / min_r3 if applicable else None
    at_t0 = np.linalg.norm(F_c[index], axis=-1)
    support = at_t0 > ZERO_TOLERANCE * max(float(np.max(at_t0, initial=0.0)), 1e-300)
    vector_ratio = 0.0
    if support.any():
        for k in (1, 2):
            size = np.linalg.norm(time_derivative_array(F_c, r.dt, k), axis=-1)
            vector_ratio = max(vector_ratio, float(np.max(size[:, support] / at_t0[support])))
    report = {
        "identity_residual": identity,
        "divergence_t0": float(np.max(np.abs(div_F[inner]), initial=0.0)),
        "rot_r_t0": rot_r.max_abs(),
        "rot_f": rot_f.max_abs(),
        "min_r3": min_r3,
        "chain_applicable": applicable,
        "chain_bound": chain,
        "vector_ratio": vector_ratio,
        "chain_holds": bool(applicable and vector_ratio <= chain * (1 + 1e-9)),
        "time_ratio": time_ratio(F, index),
    }
    if applicable:
        report["certificate_passed"] = report["time_ratio"] <= chain * (1 + 1e-9)
    else:
        logger.warning("min |r3(t0)| = 0, the bound chain does not apply")
        report["certificate_passed"] = False
    return report


def example_i_case(grid):
    """ R(x, t) = (1 + t/2) * rotation(pi x1), f = e1 at the cell centres """
    dim = grid.dim
    mesh = grid.mesh(centre(dim))
    angle = np.pi * mesh[0]
    rotation = np.zeros(mesh[0].shape + (dim, dim))
    rotation[..., 0, 0] = np.cos(angle)
    rotation[..., 0, 1] = -np.sin(angle)
    rotation[..., 1, 0] = np.sin(angle)
    rotation[..., 1, 1] = np.cos(angle)
    for k in range(2, dim):
        rotation[..., k, k] = 1.0
    growth = 1.0 + 0.5 * grid.times
    R = growth[(slice(None),) + (np.newaxis,) * (dim + 2)] * rotation[np.newaxis]
    f = np.zeros(mesh[0].shape + (dim,))
    f[..., 0] = 1.0
    return R, f


def example_i_check(R, f, grid):
    """ Source F = R(x, t) f(x) with invertible R(x, t0)

    The implied bound is M = max_k max |d^k R| |R(t0)^-1| (spectral norms).
    This factored form is an interpretation of the example and is flagged
    as such in the report.

    Args:
        R: array (time, *cells, d, d) at the cell centres
        f: array (*cells, d)
        grid: Grid
    Returns:
        dict report
    """
    R = np.asarray(R, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    dim = grid.dim
    cells = lattice_shape(grid, centre(dim))
    if R.shape != (grid.time_steps + 1,) + cells + (dim, dim) or f.shape != cells + (dim,):
        raise ValidationError("R must be (time, *cells, d, d) and f (*cells, d)")
    index = grid.t0_index
    det = np.linalg.det(R[index])
    min_det = float(np.min(np.abs(det)))
    F = np.einsum("t...ij,...j->t...i", R, f)
    at_t0 = np.linalg.norm(F[index], axis=-1)
    support = at_t0 > ZERO_TOLERANCE * max(float(np.max(at_t0, initial=0.0)), 1e-300)
    ratio = 0.0
    for k in (1, 2):
        size = np.linalg.norm(time_derivative_array(F, grid.dt, k), axis=-1)
        if support.any():
            ratio = max(ratio, float(np.max(size[:, support] / at_t0[support])))
    report = {"min_det": min_det, "ratio": ratio, "interpretation": True}
    if min_det == 0:
        logger.warning("det R(t0) vanishes, the implied bound does not apply")
        report.update(implied_M=None, holds=False, applicable=False)
        return report
    inverse = np.linalg.norm(np.linalg.inv(R[index]), ord=2, axis=(-2, -1))
    implied = 0.0
    for k in (1, 2):
        slope = np.linalg.norm(time_derivative_array(R, grid.dt, k), ord=2, axis=(-2, -1))
        implied = max(implied, float(np.max(slope * inverse[np.newaxis])))
    report.update(implied_M=implied, holds=ratio <= implied * (1 + 1e-9), applicable=True)
    return report


def rot_source_identity_check(sol, problem):
    """ rot F(t0) against rot dv/dt(t0) + rot a at t0

    a = -lap v + (A . grad) v + (v . grad) B, dv/dt by central differences.
    The pressure drops out because rot grad = 0; the same residual is
    computed for rot of the full momentum residual for comparison.

    Returns:
        dict with the identity residual, the rotated momentum residual and
        the size of rot F(t0), all L2 over the cells off the collar
    """
    grid = problem.grid
    n = grid.t0_index
    dt = grid.dt
    v = sol.v.snapshot(n)
    dv = v.with_values([(a[n + 1] - a[n - 1]) / (2.0 * dt) for a in sol.v.values], bc="none")
    lap = laplacian(v)
    a = v.with_values([-l + t + r for l, t, r in
                       zip(lap.values, advective(problem.A.snapshot(n), v).values,
                           advective(v, problem.B.snapshot(n)).values)], bc="none")
    F = problem.F.snapshot(n)
    grad_p = gradient(sol.p.snapshot(n), "neumann")
    identity = F.with_values([x - y - z for x, y, z in zip(F.values, dv.values, a.values)], bc="none")
    momentum = identity.with_values([x - g for x, g in zip(identity.values, grad_p.values)])

    def off_collar(field_):
        curl = rot(field_)
        total = 0.0
        for value, stag in zip(curl.values, curl.stags):
            total += np.sum(value[~grid.mask("collar", stag)] ** 2) * np.prod(grid.spacing)
        return float(np.sqrt(total))

    return {"identity_residual": off_collar(identity), "momentum_rot_residual": off_collar(momentum),
            "rot_source": off_collar(F.with_values(F.values, bc="none"))}


def recentre(series, grid, t0_index, half_steps):
    """ Cuts [t0 - delta, t0 + delta] out of a series onto a fresh time axis

    The new grid has T = 2 delta, so its t0 is the chosen time.

    Returns:
        (new grid, new series starting at 0)
    """
    half_steps = int(half_steps)
    lo, hi = t0_index - half_steps, t0_index + half_steps
    if lo < 0 or hi > series.count - 1:
        raise ValidationError("Window of {} steps around index {} leaves the series".format(half_steps, t0_index))
    fresh = with_time_axis(grid, 2 * half_steps * series.dt, 2 * half_steps)
    values = tuple(v[lo:hi + 1] for v in series.values)
    return fresh, TimeSeriesField(fresh, series.stags, values, series.dt, 0.0, series.bc)

