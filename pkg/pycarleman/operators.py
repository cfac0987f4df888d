""" Operators Module

    Holds the discrete differential operators on the staggered grid, the
    Leray projection and the Sobolev norms used by the stability estimate.

    Every stencil is a first difference or a two point average along one
    axis. On a node-like axis they act on the samples directly; on a
    centre-like axis one ghost layer is added first according to the
    field's boundary rule:

        dirichlet   ghost = -edge   (zero on the wall)
        neumann     ghost = edge    (zero normal derivative)
        none        ghost = 2 edge - next (linear extrapolation)
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from pycarleman.errors import ProjectionError, StaggeringError, ValidationError
from pycarleman.grid import (Field, TimeSeriesField, centre, faces, flip, integrate_spacetime,
                             lattice_shape, quadrature)

logger = logging.getLogger(__name__)

PROJECTION_RTOL = 1e-12
SPACES = {"L2": 0, "H1": 1, "H2": 2}


def _axis(arr, stag, axis):
    return arr.ndim - len(stag) + axis


def pad(arr, stag, axis, bc):
    """ Adds one ghost sample on both ends of `axis` """
    ax = _axis(arr, stag, axis)
    first = np.take(arr, [0], axis=ax)
    last = np.take(arr, [-1], axis=ax)
    if bc == "dirichlet":
        lo, hi = -first, -last
    elif bc == "neumann":
        lo, hi = first, last
    elif bc == "none":
        lo = 2.0 * first - np.take(arr, [1], axis=ax)
        hi = 2.0 * last - np.take(arr, [-2], axis=ax)
    else:
        raise ValidationError("Unknown boundary rule {}".format(bc))
    return np.concatenate([lo, arr, hi], axis=ax)


def difference(arr, stag, axis, h, bc="none"):
    """ First difference along one axis

    Returns:
        (values, stag) where the staggering is flipped along `axis`
    """
    ax = _axis(arr, stag, axis)
    if not stag[axis]:
        arr = pad(arr, stag, axis, bc)
    return np.diff(arr, axis=ax) / h, flip(stag, axis)


def average(arr, stag, axis, bc="none"):
    """ Two point average along one axis, flipping its staggering """
    ax = _axis(arr, stag, axis)
    if not stag[axis]:
        arr = pad(arr, stag, axis, bc)
    n = arr.shape[ax]
    lo = np.take(arr, np.arange(n - 1), axis=ax)
    hi = np.take(arr, np.arange(1, n), axis=ax)
    return 0.5 * (lo + hi), flip(stag, axis)


def second_difference(arr, stag, axis, h, bc="none"):
    """ Three point second difference, result on the input lattice """
    first, mid = difference(arr, stag, axis, h, bc)
    result, _ = difference(first, mid, axis, h, "none")
    return result


def centered(arr, stag, axis, h, bc="none"):
    """ Central first derivative back on the input lattice """
    first, mid = difference(arr, stag, axis, h, bc)
    result, _ = average(first, mid, axis, "none")
    return result


def interpolate_array(arr, stag_from, stag_to, bc="none"):
    """ Averages an array from one lattice onto another """
    stag = tuple(stag_from)
    for axis, (a, b) in enumerate(zip(stag_from, stag_to)):
        if a != b:
            arr, stag = average(arr, stag, axis, bc)
    return arr


def _require_vector(v, name):
    if v.rank != "vector":
        raise StaggeringError("{} needs a vector field".format(name))


def _require_scalar(u, name):
    if u.rank != "scalar":
        raise StaggeringError("{} needs a scalar field".format(name))


def gradient(u, bc=None):
    """ Discrete gradient of a scalar field

    Centre samples map to faces, node samples to edges.

    Args:
        u: scalar Field
        bc: ghost rule, u.bc when None
    Returns:
        vector Field
    Raises:
        StaggeringError: vector input
    """
    _require_scalar(u, "gradient")
    bc = u.bc if bc is None else bc
    stag = u.stags[0]
    values, stags = [], []
    for axis, h in enumerate(u.grid.spacing):
        d, s = difference(u.values[0], stag, axis, h, bc)
        values.append(d)
        stags.append(s)
    return Field(u.grid, tuple(stags), tuple(values), "none")


def divergence(v):
    """ Discrete divergence

    Face fields map to centres, edge fields to nodes.

    Raises:
        StaggeringError: scalar input or components that do not meet on one lattice
    """
    _require_vector(v, "divergence")
    targets = {flip(stag, k) for k, stag in enumerate(v.stags)}
    if len(targets) != 1:
        raise StaggeringError("Components of {} do not share a divergence lattice".format(v.stags))
    total = None
    stag = None
    for k, (value, s) in enumerate(zip(v.values, v.stags)):
        d, stag = difference(value, s, k, v.grid.spacing[k], v.bc)
        total = d if total is None else total + d
    return Field(v.grid, (stag,), (total,), "none")


def laplacian(f):
    """ Discrete Laplacian, componentwise for vectors

    For scalars this is divergence(gradient(f)) term by term.
    """
    values = []
    for value, stag in zip(f.values, f.stags):
        total = None
        for axis, h in enumerate(f.grid.spacing):
            d = second_difference(value, stag, axis, h, f.bc)
            total = d if total is None else total + d
        values.append(total)
    return Field(f.grid, f.stags, tuple(values), "none")


def _curl_term(v, i, j):
    """ d_i v_j with its lattice """
    return difference(v.values[j], v.stags[j], i, v.grid.spacing[i], v.bc)


def _curl_pair(v, i, j):
    plus, s_plus = _curl_term(v, i, j)
    minus, s_minus = _curl_term(v, j, i)
    if s_plus != s_minus:
        raise StaggeringError("d{}v{} and d{}v{} land on lattices {} and {}"
                              .format(i, j, j, i, s_plus, s_minus))
    return plus - minus, s_plus


def rot(v):
    """ Rotation of a vector field

    In 2D returns the scalar d0 v1 - d1 v0, in 3D the curl vector.

    Raises:
        StaggeringError: scalar input or incompatible component lattices
    """
    _require_vector(v, "rot")
    if v.dim == 2:
        value, stag = _curl_pair(v, 0, 1)
        return Field(v.grid, (stag,), (value,), "none")
    values, stags = [], []
    for k in range(3):
        value, stag = _curl_pair(v, (k + 1) % 3, (k + 2) % 3)
        values.append(value)
        stags.append(stag)
    return Field(v.grid, tuple(stags), tuple(values), "none")


def curl_potential(q):
    """ Divergence free face field from a potential

    2D: node scalar q maps to (d1 q, -d0 q). 3D: edge vector q maps to rot q.

    Raises:
        StaggeringError: potential on the wrong lattice
    """
    grid = q.grid
    if grid.dim == 2:
        _require_scalar(q, "curl_potential")
        if q.stags[0] != (True, True):
            raise StaggeringError("2D potential must live on nodes")
        v0, s0 = difference(q.values[0], q.stags[0], 1, grid.spacing[1], q.bc)
        v1, s1 = difference(q.values[0], q.stags[0], 0, grid.spacing[0], q.bc)
        return Field(grid, (s0, s1), (v0, -v1), "none")
    _require_vector(q, "curl_potential")
    result = rot(q)
    if result.stags != faces(3):
        raise StaggeringError("3D potential must live on edges")
    return result


def interpolate(f, stags, bc=None):
    """ Moves each component of a Field onto new lattices

    Args:
        f: Field
        stags: target staggering per component (or one tag for all)
        bc: ghost rule, f.bc when None
    """
    bc = f.bc if bc is None else bc
    if stags and isinstance(stags[0], bool):
        stags = (tuple(stags),) * len(f.values)
    values = tuple(interpolate_array(v, s, t, bc) for v, s, t in zip(f.values, f.stags, stags))
    return Field(f.grid, tuple(stags), values, "none")


def advective(a, u):
    """ (a . grad) u on the lattices of u

    Component k is sum_j interp(a_j) * centred d_j u_k.
    """
    _require_vector(a, "advective")
    _require_vector(u, "advective")
    values = []
    for value, stag in zip(u.values, u.stags):
        total = None
        for j, h in enumerate(u.grid.spacing):
            coefficient = interpolate_array(a.values[j], a.stags[j], stag, a.bc)
            term = coefficient * centered(value, stag, j, h, u.bc)
            total = term if total is None else total + term
        values.append(total)
    return Field(u.grid, u.stags, tuple(values), "none")


def time_derivative_array(values, dt, order=1):
    """ Time derivative along the leading axis

    Central differences at interior steps, second order one sided
    stencils at both ends.
    """
    if order == 0:
        return values
    if order == 1:
        return np.gradient(values, dt, axis=0, edge_order=2)
    if order != 2:
        raise ValidationError("Time derivative order must be 0, 1 or 2, got {}".format(order))
    count = values.shape[0]
    if count < 3:
        raise ValidationError("Second time difference needs 3 snapshots")
    result = np.empty_like(values)
    result[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / dt ** 2
    if count >= 4:
        result[0] = (2.0 * values[0] - 5.0 * values[1] + 4.0 * values[2] - values[3]) / dt ** 2
        result[-1] = (2.0 * values[-1] - 5.0 * values[-2] + 4.0 * values[-3] - values[-4]) / dt ** 2
    else:
        result[0] = result[-1] = result[1]
    return result


def time_derivative(series, order=1):
    """ Time derivative of a TimeSeriesField, same layout and time axis """
    return series.with_values([time_derivative_array(v, series.dt, order) for v in series.values])


def tridiagonal(n, h, corner=-2.0):
    """ 1D second difference matrix with adjustable end diagonal """
    main = np.full(n, -2.0)
    main[0] = main[-1] = corner
    return sp.diags([np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1], format="csr") / h ** 2


def kron_sum(blocks):
    """ Sum over axes of identity (x) block (x) identity, row-major ordering """
    sizes = [b.shape[0] for b in blocks]
    total = None
    for axis, block in enumerate(blocks):
        term = sp.identity(1, format="csr")
        for k, size in enumerate(sizes):
            term = sp.kron(term, block if k == axis else sp.identity(size, format="csr"), format="csr")
        total = term if total is None else total + term
    return total.tocsr()


@functools.lru_cache(maxsize=16)
def neumann_laplacian(grid):
    """ div(grad) on cell centres with zero normal flux, as a sparse matrix """
    blocks = [tridiagonal(n, h, corner=-1.0) for n, h in zip(grid.cells, grid.spacing)]
    return kron_sum(blocks)


def leray_project(v, rtol=PROJECTION_RTOL):
    """ Projects a face field onto discretely divergence free fields

    Solves the pure Neumann pressure problem div grad p = div v by
    conjugate gradients and returns v - grad p.

    Args:
        v: face vector Field with zero normal wall values; leading batch axes allowed
        rtol: relative residual of the Poisson solve
    Returns:
        face vector Field with the bc tag of v
    Raises:
        StaggeringError: not a face field
        ValidationError: nonzero normal wall values
        ProjectionError: Poisson solve did not converge within 10 N iterations
    """
    _require_vector(v, "leray_project")
    grid = v.grid
    if v.stags != faces(grid.dim):
        raise StaggeringError("leray_project needs a face field, got {}".format(v.stags))
    scale = max(1.0, v.max_abs())
    for k, value in enumerate(v.values):
        ends = np.take(value, [0, value.shape[value.ndim - grid.dim + k] - 1],
                       axis=value.ndim - grid.dim + k)
        if ends.size and np.max(np.abs(ends)) > 1e-12 * scale:
            raise ValidationError("leray_project needs zero normal velocity on the boundary")
    batch = v.batch_shape
    shape = lattice_shape(grid, centre(grid.dim))
    laplace = -neumann_laplacian(grid)
    div = divergence(v)
    rhs = -div.values[0].reshape((-1,) + shape)
    pressure = np.zeros_like(rhs)
    size = int(np.prod(shape))
    for index in range(rhs.shape[0]):
        b = rhs[index].ravel()
        b = b - b.mean()
        if not np.any(b):
            continue
        p, info = cg(laplace, b, rtol=rtol, maxiter=10 * size)
        if info > 0:
            raise ProjectionError("Pressure Poisson solve did not converge in {} iterations".format(info))
        if info < 0:
            raise ProjectionError("Pressure Poisson solve broke down")
        pressure[index] = (p - p.mean()).reshape(shape)
    p_field = Field(grid, (centre(grid.dim),), (pressure.reshape(batch + shape),), "neumann")
    grad = gradient(p_field)
    return Field(grid, v.stags, tuple(a - b for a, b in zip(v.values, grad.values)), v.bc)


def norm_squared(f, region="domain"):
    """ Squared discrete L2 norm summed over components (batched fields keep batch axes) """
    total = 0.0
    for value, stag in zip(f.values, f.stags):
        total = total + quadrature(value ** 2, f.grid, stag, region)
    return total


def l2_norm(f, region="domain"):
    return np.sqrt(norm_squared(f, region))


@dataclass(frozen=True)
class NormSpec:
    """ Which Sobolev norm to evaluate

    Attributes:
        time_order: number of time derivatives k_t in H^k(0,T; X)
        space: L2, H1 or H2
        region: domain or omega
        mode: spacetime or fixed (a single time, t0 by default)
    """
    time_order: int = 0
    space: str = "L2"
    region: str = "domain"
    mode: str = "spacetime"

    def __post_init__(self):
        if self.time_order not in (0, 1, 2):
            raise ValidationError("Time order must be 0, 1 or 2, got {}".format(self.time_order))
        if self.space not in SPACES:
            raise ValidationError("Unknown space {}".format(self.space))
        if self.region not in ("domain", "omega"):
            raise ValidationError("Norm region must be domain or omega, got {}".format(self.region))
        if self.mode not in ("spacetime", "fixed"):
            raise ValidationError("Unknown norm mode {}".format(self.mode))
        if self.mode == "fixed" and self.time_order > 0:
            raise ValidationError("Fixed time norms cannot take time derivatives")


def spatial_derivatives(f, order):
    """ Yields (values, stag) for every derivative of every component up to `order`

    Mixed second derivatives are composed first differences, one per
    unordered axis pair.
    """
    spacing = f.grid.spacing
    for value, stag in zip(f.values, f.stags):
        yield value, stag
        if order < 1:
            continue
        for j, h in enumerate(spacing):
            yield difference(value, stag, j, h, f.bc)
        if order < 2:
            continue
        for i, hi in enumerate(spacing):
            for j in range(i, len(spacing)):
                if i == j:
                    yield second_difference(value, stag, i, hi, f.bc), stag
                else:
                    first, mid = difference(value, stag, j, spacing[j], f.bc)
                    yield difference(first, mid, i, hi, "none")


def sobolev_norm(u, spec, t_index=None, window=None):
    """ Discrete Sobolev norm of a field or series

    The squared norm is the sum of the quadratures of all squared
    derivatives the NormSpec lists, restricted to the region.

    Args:
        u: Field (fixed mode) or TimeSeriesField
        spec: NormSpec
        t_index: snapshot used in fixed mode, the grid's t0 by default
        window: (first, last) snapshot indices kept in the time quadrature
    Returns:
        float
    Raises:
        ValidationError: series/field does not suit the NormSpec
    """
    order = SPACES[spec.space]
    if spec.mode == "fixed":
        if isinstance(u, TimeSeriesField):
            u = u.snapshot(u.grid.t0_index if t_index is None else t_index)
        if u.batch_shape:
            raise ValidationError("Fixed time norm needs a single snapshot")
        total = 0.0
        for value, stag in spatial_derivatives(u, order):
            total += quadrature(value ** 2, u.grid, stag, spec.region)
        return float(np.sqrt(total))
    if not isinstance(u, TimeSeriesField):
        raise ValidationError("Space-time norm needs a time series")
    if spec.time_order == 2 and u.count < 3:
        raise ValidationError("Second time derivative needs 3 snapshots")
    lo, hi = (0, u.count - 1) if window is None else window
    if not 0 <= lo < hi <= u.count - 1:
        raise ValidationError("Time window {} outside the series".format(window))
    total = 0.0
    for k in range(spec.time_order + 1):
        batched = time_derivative(u, k).as_field()
        for value, stag in spatial_derivatives(batched, order):
            total += integrate_spacetime(value[lo:hi + 1] ** 2, u.grid, stag, spec.region, dt=u.dt)
    return float(np.sqrt(total))
