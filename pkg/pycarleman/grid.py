""" Grid Module

    Holds the structured staggered grid, subdomain geometry, the time axis,
    field containers and quadrature rules.

    A staggering tag ("stag") is a tuple with one boolean per axis: True marks
    a node-like axis (cells + 1 samples including both walls), False a
    centre-like axis (cells samples at mid-cell). Pressure lives on centres,
    velocity component k on face k, which is node-like along axis k only.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import trapezoid

from pycarleman.errors import GridError, ValidationError

logger = logging.getLogger(__name__)

MIN_CELLS = 8
MIN_TIME_STEPS = 8
REGIONS = ("domain", "interior", "boundary", "omega", "omega0", "collar")
BOUNDARY_CONDITIONS = ("dirichlet", "neumann", "none")
# collar width in cells for "F|_{boundary} = 0"
COLLAR_CELLS = 2
_TOL = 1e-12


def centre(dim):
    """ Staggering of cell centres """
    return (False,) * dim


def node(dim):
    """ Staggering of grid nodes """
    return (True,) * dim


def face(dim, axis):
    """ Staggering of velocity component `axis` """
    return tuple(k == axis for k in range(dim))


def edge(dim, axis):
    """ Staggering of edges parallel to `axis` """
    return tuple(k != axis for k in range(dim))


def faces(dim):
    return tuple(face(dim, k) for k in range(dim))


def edges(dim):
    return tuple(edge(dim, k) for k in range(dim))


def flip(stag, axis):
    """ Staggering obtained by differencing or averaging along `axis` """
    return tuple((not s) if k == axis else s for k, s in enumerate(stag))


def lattice_shape(grid, stag):
    """ Sample count per axis of a staggered lattice """
    if len(stag) != grid.dim:
        raise GridError("Staggering {} does not match a {}D grid".format(stag, grid.dim))
    return tuple(n + 1 if s else n for n, s in zip(grid.cells, stag))


def _check_box(box, dim, name):
    if box is None:
        raise GridError("{} box cannot be empty.".format(name))
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    if len(box) != dim:
        raise GridError("{} box has {} axes, grid has {}".format(name, len(box), dim))
    for lo, hi in box:
        if not lo < hi:
            raise GridError("{} box interval [{}, {}] is empty".format(name, lo, hi))
    return box


@dataclass(frozen=True)
class Grid:
    """ Uniform staggered grid over a rectangle or box times [0, T]

    Attributes:
        extent: physical length per axis
        cells: cell count per axis
        T: time horizon
        time_steps: number of time steps N_t (even, t0 = T/2 sits on a node)
        omega: observation box, one (lo, hi) pair per axis
        omega0: weight core box strictly inside omega
    """
    extent: tuple
    cells: tuple
    T: float
    time_steps: int
    omega: tuple = None
    omega0: tuple = None

    @property
    def dim(self):
        return len(self.cells)

    @property
    def spacing(self):
        return tuple(length / n for length, n in zip(self.extent, self.cells))

    @property
    def h_min(self):
        return min(self.spacing)

    @property
    def dt(self):
        return self.T / self.time_steps

    @property
    def t0_index(self):
        return self.time_steps // 2

    @property
    def t0(self):
        return self.t0_index * self.dt

    @property
    def times(self):
        return np.arange(self.time_steps + 1) * self.dt

    @property
    def omega_touches_boundary(self):
        if self.omega is None:
            return False
        return any(lo <= _TOL or hi >= length - _TOL
                   for (lo, hi), length in zip(self.omega, self.extent))

    def coords(self, stag):
        """ 1D coordinate arrays of a staggered lattice """
        lattice_shape(self, stag)
        result = []
        for n, h, s in zip(self.cells, self.spacing, stag):
            if s:
                result.append(np.arange(n + 1) * h)
            else:
                result.append((np.arange(n) + 0.5) * h)
        return result

    def mesh(self, stag):
        """ Coordinate arrays broadcast over the lattice (ij indexing) """
        return np.meshgrid(*self.coords(stag), indexing="ij")

    def mask(self, region, stag):
        """ Boolean mask of a region on a staggered lattice

        Args:
            region: one of domain, interior, boundary, omega, omega0, collar
            stag: staggering tag
        Returns:
            boolean array of the lattice shape
        Raises:
            GridError: unknown region or subdomain not built yet
        """
        shape = lattice_shape(self, stag)
        if region == "domain":
            return np.ones(shape, dtype=bool)
        if region in ("interior", "boundary"):
            inside = np.ones(shape, dtype=bool)
            for axis, s in enumerate(stag):
                if s:
                    index = [slice(None)] * self.dim
                    index[axis] = [0, shape[axis] - 1]
                    inside[tuple(index)] = False
            return inside if region == "interior" else ~inside
        if region in ("omega", "omega0"):
            box = self.omega if region == "omega" else self.omega0
            if box is None:
                raise GridError("Subdomain {} has not been built".format(region))
            return _box_mask(self.mesh(stag), box)
        if region == "collar":
            width = COLLAR_CELLS
            result = np.zeros(shape, dtype=bool)
            for x, h, length in zip(self.mesh(stag), self.spacing, self.extent):
                result |= (x < width * h - _TOL) | (x > length - width * h + _TOL)
            return result
        raise GridError("Unknown region {}, expected one of {}".format(region, REGIONS))

    def weights(self, stag):
        """ 1D quadrature weights per axis

        Trapezoid on node-like axes, midpoint on centre-like axes.
        """
        result = []
        for n, h, s in zip(self.cells, self.spacing, stag):
            if s:
                w = np.full(n + 1, h)
                w[0] = w[-1] = 0.5 * h
            else:
                w = np.full(n, h)
            result.append(w)
        return result


def _box_mask(mesh, box):
    result = np.ones(mesh[0].shape, dtype=bool)
    for x, (lo, hi) in zip(mesh, box):
        result &= (x >= lo - _TOL) & (x <= hi + _TOL)
    return result


def build_grid(extent, cells, T, time_steps):
    """ Builds the space-time grid

    Args:
        extent: physical length per axis (2 or 3 axes)
        cells: cells per axis, a single integer applies to every axis
        T: time horizon
        time_steps: number of time steps, even so that t0 = T/2 is a node
    Returns:
        Grid without subdomains
    Raises:
        GridError: invalid geometry or time axis
    """
    extent = tuple(float(length) for length in extent)
    if len(extent) not in (2, 3):
        raise GridError("Grid must be 2D or 3D, got {} axes".format(len(extent)))
    if np.isscalar(cells):
        cells = (int(cells),) * len(extent)
    cells = tuple(int(n) for n in cells)
    if len(cells) != len(extent):
        raise GridError("Got {} extents but {} cell counts".format(len(extent), len(cells)))
    if any(not length > 0 for length in extent):
        raise GridError("Extents must be positive, got {}".format(extent))
    if any(n < MIN_CELLS for n in cells):
        raise GridError("Resolution must be at least {} cells per axis, got {}".format(MIN_CELLS, cells))
    if not T > 0:
        raise GridError("Time horizon must be positive, got {}".format(T))
    time_steps = int(time_steps)
    if time_steps % 2:
        raise GridError("time axis must place t0=T/2 on a node (N_t={} is odd)".format(time_steps))
    if time_steps < MIN_TIME_STEPS:
        raise GridError("Time axis needs at least {} steps, got {}".format(MIN_TIME_STEPS, time_steps))
    return Grid(extent=extent, cells=cells, T=float(T), time_steps=time_steps)


def build_subdomains(grid, omega, omega0):
    """ Fills the observation box omega and its core omega0

    omega0 must sit inside omega with at least one cell of margin on every
    side; omega must lie in the closed domain and may touch the boundary.

    Args:
        grid: Grid
        omega: (lo, hi) per axis
        omega0: (lo, hi) per axis
    Returns:
        new Grid with subdomains set
    Raises:
        GridError: violated nesting, naming the offending pair
    """
    omega = _check_box(omega, grid.dim, "omega")
    omega0 = _check_box(omega0, grid.dim, "omega0")
    for (lo, hi), length in zip(omega, grid.extent):
        if lo < -_TOL or hi > length + _TOL:
            raise GridError("omega {} is not inside the domain {}".format(omega, grid.extent))
    for (lo0, hi0), (lo, hi), h in zip(omega0, omega, grid.spacing):
        if lo0 - lo < h - _TOL or hi - hi0 < h - _TOL:
            raise GridError("omega0 {} is not nested inside omega {} with one cell of margin"
                            .format(omega0, omega))
    result = replace(grid, omega=omega, omega0=omega0)
    if result.omega_touches_boundary:
        logger.info("omega %s touches the domain boundary", omega)
    return result


def with_time_axis(grid, T, time_steps):
    """ Same spatial grid and subdomains over a new time axis """
    fresh = build_grid(grid.extent, grid.cells, T, time_steps)
    return replace(fresh, omega=grid.omega, omega0=grid.omega0)


def with_cells(grid, cells):
    """ Same geometry and time axis at another resolution """
    fresh = build_grid(grid.extent, cells, grid.T, grid.time_steps)
    return replace(fresh, omega=grid.omega, omega0=grid.omega0)


def boundary_normal_max(values, stag, axis):
    """ Largest magnitude on the wall layers of a node-like axis """
    if not stag[axis]:
        return 0.0
    ax = values.ndim - len(stag) + axis
    ends = np.take(values, [0, values.shape[ax] - 1], axis=ax)
    return float(np.max(np.abs(ends))) if ends.size else 0.0


@dataclass(frozen=True, eq=False)
class Field:
    """ Scalar or vector samples on staggered lattices

    Component arrays may carry leading batch axes (a time axis for series);
    the trailing axes always match the component lattice.

    Attributes:
        grid: Grid the samples live on
        stags: staggering tag per component
        values: array per component
        bc: ghost rule and boundary tag (dirichlet, neumann or none)
    """
    grid: Grid
    stags: tuple
    values: tuple
    bc: str = "none"

    def __post_init__(self):
        values = tuple(np.asarray(v, dtype=np.float64) for v in self.values)
        stags = tuple(tuple(bool(s) for s in stag) for stag in self.stags)
        if len(values) != len(stags) or not values:
            raise GridError("Field has {} components but {} staggering tags".format(len(values), len(stags)))
        if len(values) not in (1, self.grid.dim):
            raise GridError("Field must be scalar or have {} components".format(self.grid.dim))
        batch = None
        for value, stag in zip(values, stags):
            shape = lattice_shape(self.grid, stag)
            if value.ndim < len(shape) or value.shape[value.ndim - len(shape):] != shape:
                raise GridError("Component of shape {} does not fit lattice {}".format(value.shape, shape))
            if batch is None:
                batch = value.shape[:value.ndim - len(shape)]
            elif value.shape[:value.ndim - len(shape)] != batch:
                raise GridError("Components disagree on batch shape")
        if self.bc not in BOUNDARY_CONDITIONS:
            raise GridError("Unknown boundary condition {}".format(self.bc))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "stags", stags)
        if self.bc == "dirichlet" and len(values) == self.grid.dim:
            scale = max(1.0, max(float(np.max(np.abs(v))) if v.size else 0.0 for v in values))
            for k, (value, stag) in enumerate(zip(values, stags)):
                if boundary_normal_max(value, stag, k) > _TOL * scale:
                    raise ValidationError("Dirichlet field has nonzero normal values on the wall of axis {}"
                                          .format(k))

    @property
    def dim(self):
        return self.grid.dim

    @property
    def rank(self):
        return "scalar" if len(self.values) == 1 else "vector"

    @property
    def batch_shape(self):
        return self.values[0].shape[:self.values[0].ndim - self.dim]

    def __len__(self):
        return len(self.values)

    def __getitem__(self, k):
        return self.values[k]

    def with_values(self, values, bc=None):
        """ Same grid and staggering, new samples """
        return Field(self.grid, self.stags, tuple(values), self.bc if bc is None else bc)

    def scaled(self, factor):
        return self.with_values([factor * v for v in self.values])

    def max_abs(self):
        return max(float(np.max(np.abs(v))) if v.size else 0.0 for v in self.values)


def scalar_field(grid, stag, values, bc="none"):
    return Field(grid, (stag,), (values,), bc)


def zero_field(grid, stags, bc="none", batch=()):
    return Field(grid, tuple(stags),
                 tuple(np.zeros(tuple(batch) + lattice_shape(grid, stag)) for stag in stags), bc)


@dataclass(frozen=True, eq=False)
class TimeSeriesField:
    """ Ordered snapshots of one Field layout on a uniform time axis

    Attributes:
        grid: Grid
        stags: staggering per component
        values: array per component with a leading time axis
        dt: time step
        start: time of the first snapshot
        bc: boundary tag shared by all snapshots
    """
    grid: Grid
    stags: tuple
    values: tuple
    dt: float
    start: float = 0.0
    bc: str = "none"
    _field: Field = field(init=False, repr=False)

    def __post_init__(self):
        batched = Field(self.grid, self.stags, self.values, self.bc)
        if len(batched.batch_shape) != 1:
            raise GridError("Series components need exactly one leading time axis")
        if batched.batch_shape[0] < 3:
            raise GridError("Series needs at least 3 snapshots, got {}".format(batched.batch_shape[0]))
        if not self.dt > 0:
            raise GridError("Series time step must be positive")
        object.__setattr__(self, "values", batched.values)
        object.__setattr__(self, "stags", batched.stags)
        object.__setattr__(self, "_field", batched)

    @property
    def count(self):
        return self.values[0].shape[0]

    @property
    def times(self):
        return self.start + np.arange(self.count) * self.dt

    @property
    def rank(self):
        return self._field.rank

    def __len__(self):
        return len(self.values)

    def __getitem__(self, k):
        return self.values[k]

    def as_field(self):
        """ The whole series as one batched Field (time is the batch axis) """
        return self._field

    def snapshot(self, index):
        return Field(self.grid, self.stags, tuple(v[index] for v in self.values), self.bc)

    def with_values(self, values, start=None, bc=None):
        return TimeSeriesField(self.grid, self.stags, tuple(values), self.dt,
                               self.start if start is None else start,
                               self.bc if bc is None else bc)

    def scaled(self, factor):
        return self.with_values([factor * v for v in self.values])

    def max_abs(self):
        return self._field.max_abs()


def constant_series(snapshot, count, dt, start=0.0):
    """ Repeats one snapshot along a time axis """
    values = tuple(np.repeat(v[np.newaxis], count, axis=0) for v in snapshot.values)
    return TimeSeriesField(snapshot.grid, snapshot.stags, values, dt, start, snapshot.bc)


def _check_finite(values):
    if np.isnan(values).any():
        raise ValidationError("Integrand contains NaN")


def quadrature(values, grid, stag, region="domain"):
    """ Tensor quadrature over a region of one lattice

    Reduces the trailing spatial axes from last to first so the summation
    order is fixed. Leading batch axes are kept.

    Args:
        values: samples, trailing axes matching the lattice
        grid: Grid
        stag: staggering tag
        region: region name or boolean mask
    Returns:
        float, or array over the batch axes
    """
    values = np.asarray(values, dtype=np.float64)
    _check_finite(values)
    mask = grid.mask(region, stag) if isinstance(region, str) else np.asarray(region, dtype=bool)
    if mask.shape != lattice_shape(grid, stag):
        raise GridError("Region mask does not fit the lattice")
    if not mask.any():
        result = np.zeros(values.shape[:values.ndim - grid.dim])
        return float(result) if result.ndim == 0 else result
    integrand = np.where(mask, values, 0.0)
    for w in reversed(grid.weights(stag)):
        integrand = np.sum(integrand * w, axis=-1)
    return float(integrand) if np.ndim(integrand) == 0 else integrand


def time_weights(count, dt):
    """ Trapezoid weights along a uniform time axis """
    w = np.full(count, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def integrate_spacetime(values, grid, stag, region="domain", dt=None, weights=None):
    """ Space-time quadrature: spatial rule per snapshot, trapezoid in time

    Args:
        values: array (time, *lattice)
        grid: Grid
        stag: staggering tag
        region: spatial region
        dt: time step, grid.dt when None
        weights: explicit time weights overriding the trapezoid
    Returns:
        float
    """
    per_step = np.atleast_1d(quadrature(values, grid, stag, region))
    if weights is not None:
        return float(np.sum(per_step * np.asarray(weights)))
    if per_step.shape[0] < 2:
        return float(per_step[0]) * (dt or grid.dt)
    return float(trapezoid(per_step, dx=dt or grid.dt))


def integrate(fields, region="domain", weight=None):
    """ Integrates a scalar Field or a pointwise product of scalar Fields

    Args:
        fields: scalar Field or sequence of scalar Fields on one lattice
        region: region name or mask
        weight: optional array or callable(mesh) giving a pointwise weight
    Returns:
        quadrature value (array over batch axes for batched fields)
    Raises:
        GridError: factors on different grids or lattices
        ValidationError: NaN inputs or non finite weight on the region
    """
    if isinstance(fields, Field):
        fields = [fields]
    fields = list(fields)
    if not fields:
        raise ValidationError("Nothing to integrate")
    grid, stag = fields[0].grid, fields[0].stags[0]
    integrand = None
    for factor in fields:
        if factor.rank != "scalar":
            raise GridError("integrate takes scalar factors")
        if factor.grid != grid:
            raise GridError("Factors live on different grids")
        if factor.stags[0] != stag:
            raise GridError("Factors live on different lattices {} and {}".format(stag, factor.stags[0]))
        _check_finite(factor.values[0])
        integrand = factor.values[0] if integrand is None else integrand * factor.values[0]
    if weight is not None:
        w = weight(grid.mesh(stag)) if callable(weight) else np.asarray(weight, dtype=np.float64)
        mask = grid.mask(region, stag) if isinstance(region, str) else region
        if not np.all(np.isfinite(np.broadcast_to(w, integrand.shape)[..., mask])):
            raise ValidationError("Weight is not finite on the integration region")
        integrand = integrand * w
    return quadrature(integrand, grid, stag, region)


def bump(grid, stag, center, radius):
    """ Smooth compactly supported bump exp(1 - 1/(1 - r^2)), r = |x - c|/radius

    Args:
        grid: Grid
        stag: lattice to sample on
        center: point per axis
        radius: support radius
    Returns:
        array, 1 at the centre and exactly 0 for r >= 1
    """
    if not radius > 0:
        raise ValidationError("Bump radius must be positive")
    r2 = sum(((x - c) / radius) ** 2 for x, c in zip(grid.mesh(stag), center))
    result = np.zeros_like(r2)
    inside = r2 < 1.0
    result[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return result
