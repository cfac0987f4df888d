""" Carleman Module

    Holds the evaluators of both sides of the three Carleman estimates,
    the m-shift transform, s-sweeps and the empirical constants fitted
    from them.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from pycarleman.errors import CarlemanError, ValidationError
from pycarleman.grid import (Field, TimeSeriesField, bump, edges, faces, integrate_spacetime, node,
                             quadrature)
from pycarleman.operators import curl_potential, difference, divergence, leray_project, rot
from pycarleman.util import worker_count
from pycarleman.weights import ELL_POWER, check_weight_equivalence

logger = logging.getLogger(__name__)

LEMMAS = ("lemma1", "lemma2", "lemma3")
GROWTH_TOLERANCE = 1.05
MIN_SWEEP = 4
ZERO_ON_OMEGA = 1e-12


@dataclass(frozen=True)
class Sides:
    """ Left and right side of one inequality evaluation """
    lhs: float
    rhs: float
    flags: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.lhs
        yield self.rhs

    @property
    def ratio(self):
        return self.lhs / self.rhs if self.rhs > 0 else None


def _same_space(a, b):
    return a.extent == b.extent and a.cells == b.cells


def _dirichlet(series):
    """ Re-tags a velocity series as Dirichlet, checking its walls """
    return TimeSeriesField(series.grid, series.stags, series.values, series.dt, series.start, "dirichlet")


def _zero_walls(series):
    values = []
    for k, value in enumerate(series.values):
        value = np.array(value)
        index = [slice(None)] * value.ndim
        index[1 + k] = [0, value.shape[1 + k] - 1]
        value[tuple(index)] = 0.0
        values.append(value)
    return series.with_values(values)


def project_series(F):
    """ Leray projection of every snapshot of a face series (walls zeroed first)

    Returns:
        (projected series, L2(Q) size of the removed part)
    """
    walled = _zero_walls(F)
    projected = leray_project(walled.as_field())
    result = F.with_values(projected.values)
    delta = 0.0
    for a, b, stag in zip(F.values, result.values, F.stags):
        delta += integrate_spacetime((a - b) ** 2, F.grid, stag, "domain", dt=F.dt)
    return result, float(np.sqrt(delta))


def _gradient_terms(batched):
    for k, (value, stag) in enumerate(zip(batched.values, batched.stags)):
        for j, h in enumerate(batched.grid.spacing):
            yield difference(value, stag, j, h, batched.bc)


def _weighted_sum(terms, ws, s, power, times, region, dt):
    total = 0.0
    for value, stag in terms:
        factor = ws.carleman_factor(s, power, power, stag, times)
        total += integrate_spacetime(value ** 2 * factor, ws.grid, stag, region, dt=dt)
    return total


def lemma1_sides(v, F, ws, s, m=0, *, residuals, project_source=True):
    """ Both sides of the space-time estimate for solutions of the system

        LHS = int_Q (s^m phi^m |grad v|^2 + s^(m+1) phi^(m+1) |rot v|^2
                     + s^(m+2) phi^(m+2) |v|^2) exp(2 s alpha)
        RHS = int_Q s^m phi^m |F|^2 exp(2 s alpha)
              + int_{Q_omega} (s^(m+1) phi^(m+1) (|rot v|^2 + |grad v|^2)
                               + s^(m+2) phi^(m+2) |v|^2) exp(2 s alpha)

    Args:
        v: velocity series with zero walls
        F: source series on the same time axis
        ws: WeightSet on the same spatial grid
        s: Carleman parameter
        m: weight shift, integer >= 0
        residuals: ResidualReport of the forward solve that produced v; a
            missing or failed report is refused
        project_source: replace F by its Leray projection first
    Returns:
        Sides, flags holding the individual terms and the projection delta
    Raises:
        CarlemanError: residual check missing or failed
        ValidationError: incompatible inputs
    """
    if residuals is None:
        raise CarlemanError("v comes without a residual report of its forward solve")
    if not s > 0:
        raise ValidationError("Carleman parameter s must be positive, got {}".format(s))
    if int(m) != m or m < 0:
        raise ValidationError("Weight shift m must be a non negative integer, got {}".format(m))
    if not residuals.passed:
        raise CarlemanError("v does not solve the system for F (relative residual {:.3e})"
                            .format(float(np.max(residuals.relative))))
    if not _same_space(v.grid, ws.grid) or not _same_space(F.grid, ws.grid):
        raise ValidationError("v, F and the weights must share one spatial grid")
    if v.stags != faces(v.grid.dim) or F.stags != v.stags:
        raise ValidationError("v and F must be face series")
    if v.count != F.count or abs(v.dt - F.dt) > 1e-12 or abs(v.start - F.start) > 1e-12:
        raise ValidationError("v and F must share one time axis")
    v = _dirichlet(v)
    flags = {"m": int(m), "projected": bool(project_source)}
    if project_source:
        F, delta = project_series(F)
        flags["projection_delta"] = delta
    times = v.times
    dt = v.dt
    batched = v.as_field()
    gradient_terms = list(_gradient_terms(batched))
    curl = rot(batched)
    rot_terms = list(zip(curl.values, curl.stags))
    mass_terms = list(zip(batched.values, batched.stags))
    source_terms = list(zip(F.values, F.stags))
    lhs_parts = {
        "gradient": _weighted_sum(gradient_terms, ws, s, m, times, "domain", dt),
        "rot": _weighted_sum(rot_terms, ws, s, m + 1, times, "domain", dt),
        "mass": _weighted_sum(mass_terms, ws, s, m + 2, times, "domain", dt),
    }
    rhs_parts = {
        "source": _weighted_sum(source_terms, ws, s, m, times, "domain", dt),
        "omega_rot": _weighted_sum(rot_terms, ws, s, m + 1, times, "omega", dt),
        "omega_mass": _weighted_sum(mass_terms, ws, s, m + 2, times, "omega", dt),
        "omega_gradient": _weighted_sum(gradient_terms, ws, s, m + 1, times, "omega", dt),
    }
    flags["lhs_terms"] = lhs_parts
    flags["rhs_terms"] = rhs_parts
    return Sides(lhs=sum(lhs_parts.values()), rhs=sum(rhs_parts.values()), flags=flags)


def mshift_transform(v, m, ws):
    """ w = phi_hat^(m/2) v = ell^(-4m) v

    Snapshots where ell vanishes (t = 0 and t = T) are dropped; the series
    then starts one step later.

    Raises:
        ValidationError: negative or non integer m
    """
    if int(m) != m or m < 0:
        raise ValidationError("Weight shift m must be a non negative integer, got {}".format(m))
    if m == 0:
        return v
    times = v.times
    keep = np.nonzero(ws.ell(times) > 0)[0]
    if keep.size < 3:
        raise ValidationError("Too few snapshots with ell > 0")
    lo, hi = int(keep[0]), int(keep[-1])
    scale = ws.phi_hat(times[lo:hi + 1]) ** (m / 2.0)
    spread = (slice(None),) + (np.newaxis,) * v.grid.dim
    values = [value[lo:hi + 1] * scale[spread] for value in v.values]
    return TimeSeriesField(v.grid, v.stags, tuple(values), v.dt, float(times[lo]), v.bc)


def mshift_rate(ws, m, times):
    """ Coefficient q in dw/dt = phi_hat^(m/2) dv/dt + q phi_hat w, q = -4 m ell' ell^7 """
    ell = np.asarray(ws.ell(times))
    return -(m / 2.0) * ELL_POWER * np.asarray(ws.ell.derivative(times)) * ell ** (ELL_POWER - 1)


def mshift_consistency(v, F, ws, s, m, *, residuals, project_source=False):
    """ Compares the shifted estimate at m with the plain one on the transform

    Pointwise phi_hat / phi lies in [c_low, c_high], so
    s^m LHS_0(w) / LHS_m(v) must lie in [c_low^m, c_high^m], and likewise
    for the right side. residuals is the report of the forward solve
    behind v; the transform inherits it.

    Returns:
        dict with both ratios, the bounds and a passed flag
    """
    shifted = lemma1_sides(v, F, ws, s, m, residuals=residuals, project_source=project_source)
    plain = lemma1_sides(mshift_transform(v, m, ws), mshift_transform(F, m, ws), ws, s, 0,
                         residuals=residuals, project_source=project_source)
    c_low, c_high = check_weight_equivalence(ws)
    lower, upper = c_low ** m, c_high ** m
    lhs_ratio = s ** m * plain.lhs / shifted.lhs if shifted.lhs > 0 else None
    rhs_ratio = s ** m * plain.rhs / shifted.rhs if shifted.rhs > 0 else None
    slack = 1e-9
    passed = all(r is None or lower * (1 - slack) <= r <= upper * (1 + slack) for r in (lhs_ratio, rhs_ratio))
    return {"m": int(m), "s": float(s), "lhs_ratio": lhs_ratio, "rhs_ratio": rhs_ratio,
            "lower": lower, "upper": upper, "passed": passed}


def lemma2_sides(w, sw, s):
    """ Both sides of the stationary div-rot estimate

        LHS = int (|grad w|^2 / s + s |w|^2) exp(2 s phi0)
        RHS = int (|rot w|^2 + |div w|^2) exp(2 s phi0)

    Args:
        w: face Field with zero walls, vanishing on omega
        sw: StationaryWeight
        s: Carleman parameter
    Returns:
        Sides
    Raises:
        CarlemanError: w not zero on omega, or the weight overflows
    """
    if not s > 0:
        raise ValidationError("Carleman parameter s must be positive, got {}".format(s))
    grid = w.grid
    if not _same_space(grid, sw.grid):
        raise ValidationError("w and the weight must share one spatial grid")
    if w.rank != "vector" or w.batch_shape:
        raise ValidationError("lemma2 takes one vector snapshot")
    w = Field(grid, w.stags, w.values, "dirichlet")
    on_omega = max(float(np.max(np.abs(value[grid.mask("omega", stag)]), initial=0.0))
                   for value, stag in zip(w.values, w.stags))
    if on_omega > ZERO_ON_OMEGA:
        raise CarlemanError("w must vanish on omega, max |w| there is {:.3e}".format(on_omega))

    def weight(stag):
        with np.errstate(over="ignore"):
            values = np.exp(2.0 * s * sw.phi0(stag))
        if not np.all(np.isfinite(values)):
            raise CarlemanError("exp(2 s phi0) overflows at s = {}".format(s))
        return values

    lhs = 0.0
    for value, stag in zip(w.values, w.stags):
        lhs += s * quadrature(value ** 2 * weight(stag), grid, stag)
    for value, stag in _gradient_terms(w):
        lhs += quadrature(value ** 2 * weight(stag), grid, stag) / s
    g = rot(w)
    h = divergence(w)
    rhs = 0.0
    for value, stag in list(zip(g.values, g.stags)) + list(zip(h.values, h.stags)):
        rhs += quadrature(value ** 2 * weight(stag), grid, stag)
    flags = {"solenoidal": h.max_abs() <= 1e-12 * max(1.0, w.max_abs() / grid.h_min)}
    return Sides(lhs=float(lhs), rhs=float(rhs), flags=flags)


def lemma3_sides(g, ws, s):
    """ Both sides of the L1 estimate

        LHS = int_Q phi |g| exp(2 s alpha),  RHS = int |g| exp(2 s alpha(., t0))

    Negative entries of g are replaced by their absolute value and flagged.

    Raises:
        ValidationError: s < 1 or g not a scalar snapshot
    """
    if not s >= 1:
        raise ValidationError("lemma3 needs s >= 1, got {}".format(s))
    if g.rank != "scalar" or g.batch_shape:
        raise ValidationError("lemma3 takes one scalar snapshot")
    if not _same_space(g.grid, ws.grid):
        raise ValidationError("g and the weights must share one spatial grid")
    values = g.values[0]
    negative = bool(np.any(values < 0))
    if negative:
        logger.warning("lemma3 input has negative entries, using |g|")
        values = np.abs(values)
    stag = g.stags[0]
    grid = ws.grid
    times = grid.times
    lhs = integrate_spacetime(values * ws.carleman_factor(s, 0, 1, stag, times), grid, stag)
    at_t0 = ws.carleman_factor(s, 0, 0, stag, np.array([grid.t0]))[0]
    rhs = quadrature(values * at_t0, grid, stag)
    return Sides(lhs=float(lhs), rhs=float(rhs), flags={"negative_input": negative})


@dataclass(frozen=True)
class SweepRow:
    s: float
    lhs: float
    rhs: float
    ratio: float = None


@dataclass(frozen=True, eq=False)
class CarlemanReport:
    """ Outcome of an s-sweep

    Attributes:
        lemma: lemma1, lemma2 or lemma3
        m: weight shift (lemma1)
        rows: SweepRow per s in ascending order
        constant: fitted C, max ratio over s >= threshold (None when degenerate)
        threshold: smallest s after which ratios stop growing by more than 5%
        degenerate: every right side vanished
        inputs: description of the fixed inputs
        certificates: weight certificates used
    """
    lemma: str
    rows: list
    constant: float = None
    threshold: float = None
    degenerate: bool = False
    m: int = None
    inputs: dict = field(default_factory=dict)
    certificates: dict = field(default_factory=dict)

    def as_rows(self):
        return [{"s": r.s, "lhs": r.lhs, "rhs": r.rhs, "ratio": "" if r.ratio is None else r.ratio}
                for r in self.rows]

    def summary(self):
        return {"lemma": self.lemma, "m": self.m, "constant": self.constant, "threshold": self.threshold,
                "degenerate": self.degenerate, "inputs": self.inputs, "certificates": self.certificates,
                "rows": len(self.rows)}


def fit_threshold(rows):
    """ Smallest s after which the ratio never grows by more than 5% per step

    Returns:
        (threshold, constant) or (None, None) when no ratio is defined
    """
    defined = [r for r in rows if r.ratio is not None]
    if not defined:
        return None, None
    start = len(defined) - 1
    for i in range(len(defined) - 2, -1, -1):
        if defined[i + 1].ratio <= GROWTH_TOLERANCE * defined[i].ratio:
            start = i
        else:
            break
    return defined[start].s, max(r.ratio for r in defined[start:])


def s_sweep(evaluator, s_list, lemma, m=None, inputs=None, certificates=None, workers=None):
    """ Evaluates an inequality over ascending s and fits its constant

    Args:
        evaluator: callable s -> Sides
        s_list: at least 4 ascending positive values
        lemma: lemma id recorded in the report
        m: weight shift recorded for lemma1
        inputs: description of the fixed inputs
        certificates: weight certificates to carry along
        workers: pool size, capped by CNSF_THREADS
    Returns:
        CarlemanReport; an all-zero right side gives constant None and degenerate True
    Raises:
        ValidationError: malformed s list or lemma id
    """
    if lemma not in LEMMAS:
        raise ValidationError("Unknown lemma {}".format(lemma))
    s_list = [float(s) for s in s_list]
    if len(s_list) < MIN_SWEEP:
        raise ValidationError("s sweep needs at least {} values, got {}".format(MIN_SWEEP, len(s_list)))
    if any(b <= a for a, b in zip(s_list[:-1], s_list[1:])):
        raise ValidationError("s values must be strictly ascending")
    if s_list[0] <= 0:
        raise ValidationError("s values must be positive")
    with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
        results = list(pool.map(evaluator, s_list))
    rows = [SweepRow(s=s, lhs=float(r.lhs), rhs=float(r.rhs), ratio=r.ratio) for s, r in zip(s_list, results)]
    degenerate = all(r.rhs == 0 for r in rows)
    if degenerate:
        logger.warning("%s sweep has a vanishing right side for every s", lemma)
        threshold, constant = None, None
    else:
        threshold, constant = fit_threshold(rows)
    return CarlemanReport(lemma=lemma, rows=rows, constant=constant, threshold=threshold,
                          degenerate=degenerate, m=m, inputs=dict(inputs or {}),
                          certificates=dict(certificates or {}))


def calibrate_constant(reports):
    """ Constant and threshold over a calibration family

    Returns:
        (max constant, max threshold) over the non degenerate reports
    Raises:
        ValidationError: every report is degenerate
    """
    usable = [r for r in reports if not r.degenerate and r.constant is not None]
    if not usable:
        raise ValidationError("No calibration report defines a constant")
    return max(r.constant for r in usable), max(r.threshold for r in usable)


def check_holdout(reports, constant, threshold, slack):
    """ Checks held out sweeps against a calibrated constant

    Returns:
        dict with the worst ratio for s >= threshold, the limit slack * constant
        and a passed flag
    """
    worst = 0.0
    for report in reports:
        for row in report.rows:
            if row.s >= threshold and row.ratio is not None:
                worst = max(worst, row.ratio)
    limit = slack * constant
    return {"worst": worst, "limit": limit, "threshold": threshold, "passed": worst <= limit}


def calibrate_and_hold(calibration, holdout, slack):
    """ Fits the constant on one family of sweeps and checks another against it

    Args:
        calibration: CarlemanReports the constant is fitted on
        holdout: CarlemanReports checked against slack * constant
        slack: allowed growth of the held out ratios
    Returns:
        dict with the family sizes, constant, threshold and the holdout verdict
    Raises:
        ValidationError: empty holdout family or no usable calibration report
    """
    if not holdout:
        raise ValidationError("Holdout family cannot be empty.")
    constant, threshold = calibrate_constant(calibration)
    verdict = check_holdout(holdout, constant, threshold, slack)
    logger.info("calibrated C = %.4g above s = %s, holdout worst %.4g (limit %.4g)",
                constant, threshold, verdict["worst"], verdict["limit"])
    return {"calibration_size": len(calibration), "holdout_size": len(holdout), "constant": constant,
            "threshold": threshold, "slack": slack, "holdout": verdict}


def _bump_slabs(grid, reach):
    """ (axis, lo, hi) intervals between the collar and omega wide enough for a bump """
    h = grid.spacing
    slabs = []
    for axis, ((lo, hi), length) in enumerate(zip(grid.omega, grid.extent)):
        collar = 2 * h[axis]
        for a, b in ((collar, lo), (hi, length - collar)):
            if b - a >= 2 * reach:
                slabs.append((axis, a, b))
    return slabs


def bump_radius(grid):
    """ Largest comfortable bump radius between the collar and omega """
    h = max(grid.spacing)
    widest = 0.0
    for (lo, hi), length, hk in zip(grid.omega, grid.extent, grid.spacing):
        widest = max(widest, lo - 2 * hk, length - 2 * hk - hi)
    radius = 0.8 * (widest / 2.0 - h)
    if radius < 2 * h:
        raise ValidationError("No room for bumps between the boundary collar and omega")
    return radius


def bump_center(grid, rng, radius):
    """ Random centre whose bump (plus one cell) avoids omega and the collar """
    reach = radius + max(grid.spacing)
    slabs = _bump_slabs(grid, reach)
    if not slabs:
        raise ValidationError("No room for bumps of radius {} outside omega".format(radius))
    axis, lo, hi = slabs[int(rng.integers(len(slabs)))]
    center = []
    for k, (length, h) in enumerate(zip(grid.extent, grid.spacing)):
        if k == axis:
            center.append(float(rng.uniform(lo + reach, hi - reach)))
        else:
            center.append(float(rng.uniform(2 * h + reach, length - 2 * h - reach)))
    return tuple(center)


def lemma2_bump_family(grid, seed, count, solenoidal=False, radius=None):
    """ Random bump fields supported away from omega and the boundary

    Args:
        grid: Grid with subdomains
        seed: generator seed
        count: number of fields
        solenoidal: build curl potentials (div w = 0 exactly) instead of
            independent component bumps
        radius: bump radius, the widest comfortable one when None
    Returns:
        list of face Fields
    """
    rng = np.random.default_rng(seed)
    radius = bump_radius(grid) if radius is None else radius
    family = []
    for _ in range(count):
        center = bump_center(grid, rng, radius)
        amplitude = float(rng.uniform(0.5, 1.5)) * float(rng.choice([-1.0, 1.0]))
        if solenoidal:
            if grid.dim == 2:
                q = Field(grid, (node(2),), (amplitude * radius * bump(grid, node(2), center, radius),))
            else:
                weights = rng.uniform(-1.0, 1.0, size=3)
                q = Field(grid, edges(3), tuple(amplitude * radius * c * bump(grid, stag, center, radius)
                                                for c, stag in zip(weights, edges(3))))
            w = curl_potential(q)
        else:
            directions = rng.uniform(-1.0, 1.0, size=grid.dim)
            w = Field(grid, faces(grid.dim), tuple(amplitude * c * bump(grid, stag, center, radius)
                                                   for c, stag in zip(directions, faces(grid.dim))))
        family.append(Field(grid, w.stags, w.values, "dirichlet"))
    return family
