""" Weights Module

    Holds the Carleman weight machinery: the spatial profile eta, the time
    profile ell, the singular weights phi, alpha and phi_hat built from
    them, the stationary weight phi0 = exp(lambda psi) and the checks of
    their inequalities.

        phi(x, t)   = exp(lambda eta(x)) / ell(t)^8
        alpha(x, t) = (exp(lambda eta(x)) - exp(2 lambda |eta|_max)) / ell(t)^8
        phi_hat(t)  = 1 / ell(t)^8
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import minimum_filter
from scipy.sparse.linalg import spsolve

from pycarleman.errors import CertificateError, ValidationError
from pycarleman.grid import integrate_spacetime, lattice_shape, node
from pycarleman.operators import interpolate_array, kron_sum, tridiagonal

logger = logging.getLogger(__name__)

ELL_POWER = 8
LOG_FLUSH = -700.0
GRADIENT_FLOOR_FACTOR = 10.0
METHODS = ("analytic", "poisson")


def _smooth_step(u):
    """ Exponential smoothstep B(u) = f(u)/(f(u) + f(1-u)), f(u) = exp(-1/u), and B' """
    u = np.clip(np.asarray(u, dtype=np.float64), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        f = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        g = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
        df = np.where(u > 0, f / np.where(u > 0, u, 1.0) ** 2, 0.0)
        dg = np.where(u < 1, g / np.where(u < 1, 1.0 - u, 1.0) ** 2, 0.0)
    total = f + g
    value = f / total
    derivative = (df * g + f * dg) / total ** 2
    return value, derivative


@dataclass(frozen=True)
class TimeProfile:
    """ The time profile ell of the singular weights

    ell(t) = t on [0, T/4], a smooth monotone blend up to `peak` at T/2,
    mirrored on [T/2, T].
    """
    T: float
    peak: float

    def _rising(self, t):
        quarter = self.T / 4.0
        u = (t - quarter) / quarter
        blend, dblend = _smooth_step(u)
        value = np.where(t <= quarter, t, t + (self.peak - t) * blend)
        slope = np.where(t <= quarter, 1.0, 1.0 - blend + (self.peak - t) * dblend / quarter)
        return value, slope

    def _fold(self, t):
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < -1e-12) or np.any(t > self.T + 1e-12):
            raise ValidationError("ell evaluated outside [0, T]")
        late = t > self.T / 2.0
        return np.where(late, self.T - t, t), late

    def __call__(self, t):
        folded, _ = self._fold(t)
        value, _ = self._rising(folded)
        return value

    def derivative(self, t):
        folded, late = self._fold(t)
        _, slope = self._rising(folded)
        return np.where(late, -slope, slope)


def build_ell(T, peak_value=None):
    """ Builds the time profile ell

    Args:
        T: time horizon
        peak_value: ell(T/2), T/2 when None
    Returns:
        TimeProfile
    Raises:
        ValidationError: peak at or below T/4, or between T/4 and T/2 where
            the blend would not be monotone
    """
    if not T > 0:
        raise ValidationError("Time horizon must be positive")
    peak = T / 2.0 if peak_value is None else float(peak_value)
    if peak <= T / 4.0:
        raise ValidationError("ell peak {} must exceed T/4 = {}".format(peak, T / 4.0))
    if peak < T / 2.0:
        raise ValidationError("ell peak {} below T/2 = {} breaks monotonicity of the blend"
                              .format(peak, T / 2.0))
    return TimeProfile(T=float(T), peak=peak)


@dataclass(frozen=True, eq=False)
class WeightCertificate:
    """ Result of certifying a spatial weight profile

    Attributes:
        method: analytic or poisson
        region: subdomain that must hold every critical point
        critical_points: (index, coordinates) of detected critical nodes
        min_gradient: min |grad| over nodes outside the region, corners excluded
        gradient_floor: threshold used for critical point candidates
        corners_excluded: corner nodes are skipped in both checks
    """
    method: str
    region: str
    critical_points: list
    min_gradient: float
    gradient_floor: float
    corners_excluded: bool = True

    def as_dict(self):
        return {
            "method": self.method,
            "region": self.region,
            "critical_points": [{"index": list(i), "x": list(x)} for i, x in self.critical_points],
            "min_gradient": self.min_gradient,
            "gradient_floor": self.gradient_floor,
            "corners_excluded": self.corners_excluded,
        }


def _corner_mask(shape):
    """ Nodes where two or more walls meet (box corners, and box edges in 3D) """
    walls = np.zeros(shape, dtype=int)
    for axis, n in enumerate(shape):
        index = [np.newaxis] * len(shape)
        index[axis] = slice(None)
        on_wall = np.zeros(n, dtype=int)
        on_wall[[0, -1]] = 1
        walls = walls + on_wall[tuple(index)]
    return walls >= 2


def certify_profile(grid, values, region, method):
    """ Locates discrete critical points of a node profile

    A node is critical when |grad| is below 10 h max|hessian| and is a
    local minimum of |grad| over its 3^d neighbourhood. Corners are skipped.

    Args:
        grid: Grid with subdomains
        values: node samples
        region: omega0 or omega
        method: label recorded in the certificate
    Returns:
        WeightCertificate
    Raises:
        CertificateError: a critical point outside the region, named by node
    """
    spacing = grid.spacing
    grads = np.gradient(values, *spacing, edge_order=2)
    magnitude = np.sqrt(sum(g ** 2 for g in grads))
    hessian = max(float(np.max(np.abs(np.gradient(g, *spacing, edge_order=2)[axis])))
                  for g in grads for axis in range(grid.dim))
    floor = GRADIENT_FLOOR_FACTOR * max(spacing) * hessian
    corners = _corner_mask(values.shape)
    local_min = magnitude <= minimum_filter(magnitude, size=3, mode="nearest")
    critical = local_min & (magnitude < floor) & ~corners
    inside = grid.mask(region, node(grid.dim))
    coords = grid.coords(node(grid.dim))
    points = []
    for index in zip(*np.nonzero(critical)):
        x = tuple(float(c[i]) for c, i in zip(coords, index))
        if not inside[index]:
            raise CertificateError("critical point at node {} x={} lies outside {}"
                                   .format(tuple(int(i) for i in index), x, region))
        points.append((tuple(int(i) for i in index), x))
    outside = ~inside & ~corners
    min_gradient = float(np.min(magnitude[outside])) if outside.any() else float("inf")
    if not min_gradient > 0:
        raise CertificateError("gradient vanishes outside {}".format(region))
    return WeightCertificate(method=method, region=region, critical_points=points,
                             min_gradient=min_gradient, gradient_floor=floor)


def _sine_profile(grid):
    def profile(mesh):
        result = np.ones_like(mesh[0])
        for x, length in zip(mesh, grid.extent):
            result = result * np.sin(np.pi * x / length)
        return result
    return profile


def _zero_walls(grid, values, stag):
    values = np.array(values, dtype=np.float64)
    values[grid.mask("boundary", stag)] = 0.0
    return values


def _poisson_profile(grid):
    """ Solves -lap eta = 1 on interior nodes with eta = 0 on the walls, scaled to max 1 """
    blocks = [tridiagonal(n - 1, h) for n, h in zip(grid.cells, grid.spacing)]
    matrix = sp.csc_matrix(-kron_sum(blocks))
    interior = spsolve(matrix, np.ones(matrix.shape[0]))
    values = np.zeros(lattice_shape(grid, node(grid.dim)))
    values[tuple(slice(1, -1) for _ in range(grid.dim))] = interior.reshape(
        tuple(n - 1 for n in grid.cells))
    return values / np.max(values)


@dataclass(frozen=True, eq=False)
class WeightSet:
    """ Space-time Carleman weights on one grid

    Attributes:
        grid: Grid with subdomains
        lam: lambda
        eta: node samples of eta
        ell: TimeProfile
        certificate: WeightCertificate of eta
        eta_fn: analytic eta(mesh) when available, used off the node lattice
    """
    grid: object
    lam: float
    eta: np.ndarray
    ell: TimeProfile
    certificate: WeightCertificate = None
    eta_fn: object = None
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    @property
    def eta_max(self):
        return float(np.max(self.eta))

    def eta_on(self, stag):
        """ eta sampled on any lattice """
        stag = tuple(stag)
        if stag not in self._cache:
            if all(stag):
                values = self.eta
            elif self.eta_fn is not None:
                values = _zero_walls(self.grid, self.eta_fn(self.grid.mesh(stag)), stag)
            else:
                values = interpolate_array(self.eta, node(self.grid.dim), stag, "none")
            self._cache[stag] = np.maximum(values, 0.0)
        return self._cache[stag]

    def _parts(self, stag, times):
        """ exp(lambda eta) on the lattice and ell over time, broadcast as (time, *lattice) """
        spread = (slice(None),) + (np.newaxis,) * self.grid.dim
        ell = np.asarray(self.ell(times), dtype=np.float64)[spread]
        return np.exp(self.lam * self.eta_on(stag))[np.newaxis], ell

    def phi(self, stag, times):
        exp_eta, ell = self._parts(stag, times)
        with np.errstate(divide="ignore"):
            return exp_eta * ell ** -float(ELL_POWER)

    def phi_hat(self, times):
        with np.errstate(divide="ignore"):
            return np.asarray(self.ell(times), dtype=np.float64) ** -float(ELL_POWER)

    def alpha(self, stag, times):
        exp_eta, ell = self._parts(stag, times)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (exp_eta - np.exp(2.0 * self.lam * self.eta_max)) * ell ** -float(ELL_POWER)

    def dalpha(self, stag, times):
        """ d/dt alpha = -8 ell' ell^-9 (exp(lambda eta) - exp(2 lambda |eta|)) """
        exp_eta, ell = self._parts(stag, times)
        spread = (slice(None),) + (np.newaxis,) * self.grid.dim
        slope = np.asarray(self.ell.derivative(times), dtype=np.float64)[spread]
        with np.errstate(divide="ignore", invalid="ignore"):
            return (-ELL_POWER * slope * ell ** -float(ELL_POWER + 1)
                    * (exp_eta - np.exp(2.0 * self.lam * self.eta_max)))

    def carleman_factor(self, s, s_power, phi_power, stag, times):
        """ s^p phi^q exp(2 s alpha), evaluated in log space

        Snapshots with ell = 0 give the limit 0 and exponents below -700
        are flushed to 0.
        """
        exp_eta, ell = self._parts(stag, times)
        ell = np.broadcast_to(ell, (ell.shape[0],) + exp_eta.shape[1:])
        alive = ell > 0
        log_ell = np.log(np.where(alive, ell, 1.0))
        gap = exp_eta - np.exp(2.0 * self.lam * self.eta_max)
        log_value = (s_power * np.log(s) + phi_power * (self.lam * self.eta_on(stag)[np.newaxis]
                                                        - ELL_POWER * log_ell)
                     + 2.0 * s * gap * np.exp(-ELL_POWER * log_ell))
        keep = alive & (log_value >= LOG_FLUSH)
        return np.where(keep, np.exp(np.where(keep, log_value, 0.0)), 0.0)


@dataclass(frozen=True, eq=False)
class WeightEvaluators:
    """ Pointwise evaluators of one WeightSet at a fixed s """
    weights: WeightSet
    s: float

    def phi(self, stag, times):
        return self.weights.phi(stag, times)

    def alpha(self, stag, times):
        return self.weights.alpha(stag, times)

    def dalpha(self, stag, times):
        return self.weights.dalpha(stag, times)

    def exp2salpha(self, stag, times):
        return self.weights.carleman_factor(self.s, 0, 0, stag, times)

    def phi_hat_power(self, m, times):
        return self.weights.phi_hat(times) ** m


def eval_weights(ws, s):
    """ Binds the weight evaluators to a Carleman parameter

    Raises:
        ValidationError: s not positive
    """
    if not s > 0:
        raise ValidationError("Carleman parameter s must be positive, got {}".format(s))
    return WeightEvaluators(weights=ws, s=float(s))


def build_eta(grid, method="analytic"):
    """ Builds the spatial profile eta on the nodes and certifies it

    analytic: eta = prod sin(pi x_k / L_k), critical point at the centre.
    poisson: -lap eta = 1 with eta = 0 on the walls, scaled to max 1.

    Args:
        grid: Grid with subdomains
        method: analytic or poisson
    Returns:
        (eta node samples, eta callable or None, WeightCertificate)
    Raises:
        ValidationError: unknown method
        CertificateError: critical point outside omega0
    """
    if method == "analytic":
        profile = _sine_profile(grid)
        values = _zero_walls(grid, profile(grid.mesh(node(grid.dim))), node(grid.dim))
    elif method == "poisson":
        profile = None
        values = _poisson_profile(grid)
    else:
        raise ValidationError("Unknown eta method {}, expected one of {}".format(method, METHODS))
    certificate = certify_profile(grid, values, "omega0", method)
    logger.debug("eta certified: %d critical point(s), min gradient %.3e",
                 len(certificate.critical_points), certificate.min_gradient)
    return values, profile, certificate


def build_weights(grid, lam=1.0, method="analytic", peak=None):
    """ Builds the full WeightSet from eta and ell """
    if lam < 0:
        raise ValidationError("lambda must not be negative, got {}".format(lam))
    eta, profile, certificate = build_eta(grid, method)
    return WeightSet(grid=grid, lam=float(lam), eta=eta, ell=build_ell(grid.T, peak),
                     certificate=certificate, eta_fn=profile)


def check_weight_equivalence(ws):
    """ Tightest constants with c_low phi <= phi_hat <= c_high phi

    Evaluated over every node and every time where ell > 0.

    Returns:
        (c_low, c_high)
    Raises:
        CertificateError: constants not finite and positive
    """
    times = ws.grid.times
    times = times[ws.ell(times) > 0]
    spread = (slice(None),) + (np.newaxis,) * ws.grid.dim
    ratio = ws.phi_hat(times)[spread] / ws.phi(node(ws.grid.dim), times)
    c_low, c_high = float(np.min(ratio)), float(np.max(ratio))
    if not (np.isfinite(c_low) and np.isfinite(c_high) and c_low > 0 and c_high > 0):
        raise CertificateError("weight equivalence constants ({}, {}) are not finite and positive"
                               .format(c_low, c_high))
    return c_low, c_high


def check_dalpha_bound(ws):
    """ Fitted C in |d/dt alpha| <= C phi^2

    Uses the closed form |d/dt alpha| / phi^2 =
    8 |ell'| ell^7 (exp(2 lambda |eta|) - exp(lambda eta)) exp(-2 lambda eta),
    which stays finite at t = 0 and t = T.

    Raises:
        CertificateError: non finite bound
    """
    times = ws.grid.times
    spread = (slice(None),) + (np.newaxis,) * ws.grid.dim
    ell = np.asarray(ws.ell(times))[spread]
    slope = np.abs(np.asarray(ws.ell.derivative(times)))[spread]
    eta = ws.eta[np.newaxis]
    ratio = (ELL_POWER * slope * ell ** (ELL_POWER - 1)
             * (np.exp(2.0 * ws.lam * ws.eta_max) - np.exp(ws.lam * eta)) * np.exp(-2.0 * ws.lam * eta))
    bound = float(np.max(ratio))
    if not np.isfinite(bound):
        raise CertificateError("|d alpha/dt| / phi^2 is not bounded on the grid")
    return bound


@dataclass(frozen=True, eq=False)
class StationaryWeight:
    """ phi0 = exp(lambda psi) with psi > c0 inside and psi = c0 on the walls """
    grid: object
    c0: float
    psi: np.ndarray
    lam: float
    certificate: WeightCertificate = None
    psi_fn: object = None

    def psi_on(self, stag):
        stag = tuple(stag)
        if all(stag):
            return self.psi
        if self.psi_fn is not None:
            return self.c0 + _zero_walls(self.grid, self.psi_fn(self.grid.mesh(stag)), stag)
        return interpolate_array(self.psi, node(self.grid.dim), stag, "none")

    def phi0(self, stag):
        return np.exp(self.lam * self.psi_on(stag))


def build_psi_phi0(grid, c0, lam, method="analytic"):
    """ Builds the stationary weight whose critical points all lie in omega

    Raises:
        CertificateError: critical point outside omega
    """
    if method == "analytic":
        profile = _sine_profile(grid)
        shape = _zero_walls(grid, profile(grid.mesh(node(grid.dim))), node(grid.dim))
    elif method == "poisson":
        profile = None
        shape = _poisson_profile(grid)
    else:
        raise ValidationError("Unknown psi method {}, expected one of {}".format(method, METHODS))
    certificate = certify_profile(grid, shape, "omega", method)
    return StationaryWeight(grid=grid, c0=float(c0), psi=float(c0) + shape, lam=float(lam),
                            certificate=certificate, psi_fn=profile)


def weighted_mass(ws, s, power, region="domain"):
    """ Space-time integral of s^p phi^p exp(2 s alpha) over the nodes """
    stag = node(ws.grid.dim)
    factor = ws.carleman_factor(s, power, power, stag, ws.grid.times)
    return integrate_spacetime(factor, ws.grid, stag, region)


@dataclass(frozen=True, eq=False)
class RegularWeight:
    """ Non singular weight exp(lambda (d(x) - beta (t - t0)^2)) """
    grid: object
    d: np.ndarray
    lam: float
    beta: float

    def values(self, times):
        spread = (slice(None),) + (np.newaxis,) * self.grid.dim
        shift = (np.asarray(times) - self.grid.t0)[spread]
        return np.exp(self.lam * (self.d[np.newaxis] - self.beta * shift ** 2))


def build_regular_weight(grid, d, lam, beta):
    """ Regular weight built from a node profile d

    Raises:
        ValidationError: d does not fit the nodes or beta is not positive
    """
    d = np.asarray(d, dtype=np.float64)
    if d.shape != lattice_shape(grid, node(grid.dim)):
        raise ValidationError("Regular weight profile must live on the nodes")
    if not beta > 0:
        raise ValidationError("beta must be positive")
    return RegularWeight(grid=grid, d=d, lam=float(lam), beta=float(beta))


def lemma2_rescaling(sw, s):
    """ Shifting psi by c0 and rescaling s by exp(lambda c0) leaves s phi0 fixed

    Returns:
        dict with the rescaled s and the largest relative mismatch
    """
    stag = node(sw.grid.dim)
    shifted = np.exp(sw.lam * (sw.psi_on(stag) - sw.c0))
    rescaled = s * np.exp(sw.lam * sw.c0)
    original = s * sw.phi0(stag)
    mismatch = float(np.max(np.abs(rescaled * shifted - original) / np.abs(original)))
    return {"s": float(s), "rescaled_s": float(rescaled), "mismatch": mismatch}
