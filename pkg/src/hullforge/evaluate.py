"""Post-sampling analysis: audits, tolerance stats, PCA, KDE, comparisons.

Audits re-simulate every feasible sampled hull (exact geometry + the
thin-ship solver) next to its surrogate prediction, which is what exposes
surrogate exploitation by the optimizer.  Volume errors use the exact
geometric measure as ground truth, never the volume regressor.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .config import TestCase, WaterConstants
from .errors import DegeneracyError, DomainError
from .geometry import HullParams, centerplane_slopes, measure_at, validate
from .hydro import (FlowCondition, friction_resistance, michell_wave_resistance,
                    predicted_total_resistance)
from .neural import MlpModel

TOLERANCE_BANDS = (0.01, 0.05, 0.10)


def normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def volume_error_fraction(feasibility_rate: float, mean: float, std: float,
                          tol: float = 0.05) -> float:
    """Expected fraction of samples inside the volume-error band.

    Gaussian model of the error distribution scaled by the feasibility
    rate; a zero spread degenerates to the indicator of the mean being
    inside the band.
    """
    if std < 0:
        raise DomainError("standard deviation must be non-negative")
    if std == 0.0:
        inside = 1.0 if abs(mean) <= tol else 0.0
        return feasibility_rate * inside
    hi = normal_cdf((tol - mean) / std)
    lo = normal_cdf((-tol - mean) / std)
    return feasibility_rate * (hi - lo)


@dataclass(frozen=True)
class SampleAudit:
    """Per-hull audit record; error fields are None for infeasible hulls."""

    feasible: bool
    vol_err: float | None = None
    beam_err: float | None = None
    depth_err: float | None = None
    surrogate_rt: float | None = None
    simulated_rt: float | None = None


def audit_one(shape_norm, case: TestCase, resistance: MlpModel,
              waterline: MlpModel, normalizer,
              water: WaterConstants | None = None, *,
              n_theta: int = 384, plane_nx: int = 512,
              plane_nz: int = 48) -> SampleAudit:
    """Validate, measure, and re-simulate a single normalized design vector."""
    water = water or WaterConstants()
    shape = normalizer.denormalize(np.asarray(shape_norm, dtype=float))
    params = HullParams(case.loa, shape)
    if not validate(params).feasible:
        return SampleAudit(feasible=False)
    depth = shape[1] * case.loa
    tstar = case.draft / depth
    if tstar > 1.0:   # the target draft cannot submerge past the deck
        return SampleAudit(feasible=False)

    vol, sa, wl = measure_at(params, tstar)
    vol_err = (vol * case.loa**3 - case.volume) / case.volume
    beam_err = (shape[0] * case.loa - case.boa) / case.boa
    depth_err = (depth - case.depth) / case.depth

    cond = FlowCondition(speed=case.speed, loa=case.loa, tstar=tstar,
                         rho=water.rho, g=water.g, nu=water.nu)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        slopes = centerplane_slopes(params, tstar, plane_nx, plane_nz)
        rw = michell_wave_resistance(slopes, cond, n_theta=n_theta)
    rf = friction_resistance(cond, sa, wl)
    simulated = rw + rf

    xrow = np.asarray(shape_norm, dtype=float)[None, :]
    tcol = np.array([[tstar]])
    wl_hat = max(float(waterline.predict(np.hstack([xrow, tcol]))[0]), 0.05)
    fn = case.speed / math.sqrt(water.g * wl_hat * case.loa)
    inp = np.hstack([xrow, tcol, [[fn]], [[math.log10(case.loa)]]])
    surrogate = predicted_total_resistance(float(resistance.predict(inp)[0]), cond)
    return SampleAudit(True, float(vol_err), float(beam_err), float(depth_err),
                       float(surrogate), float(simulated))


def audit_samples(shapes_norm, case: TestCase, resistance: MlpModel,
                  waterline: MlpModel, normalizer,
                  water: WaterConstants | None = None, **kw) -> list:
    """Audit a batch of normalized design vectors; failures are recorded
    as infeasible entries rather than raised."""
    out = []
    for row in np.atleast_2d(np.asarray(shapes_norm, dtype=float)):
        try:
            out.append(audit_one(row, case, resistance, waterline, normalizer,
                                 water, **kw))
        except Exception:
            out.append(SampleAudit(feasible=False))
    return out


def audit_stats(audits, tol: float = 0.05) -> dict:
    """Feasibility rate, error moments, and the in-band volume fraction."""
    n = len(audits)
    feas = [a for a in audits if a.feasible]
    rate = len(feas) / n if n else 0.0
    stats = {"n": n, "feasibility_rate": rate}
    for name in ("vol_err", "beam_err", "depth_err"):
        vals = np.array([getattr(a, name) for a in feas], dtype=float)
        stats[f"{name}_mean"] = float(vals.mean()) if vals.size else math.nan
        stats[f"{name}_std"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    if feas:
        stats["volume_in_band"] = volume_error_fraction(
            rate, stats["vol_err_mean"], stats["vol_err_std"], tol)
    else:
        stats["volume_in_band"] = 0.0
    return stats


# ---------------------------------------------------------------------------
# Diversity / distribution views


@dataclass(frozen=True)
class Pca2:
    mean: np.ndarray
    components: np.ndarray        # (2, dim)
    explained_ratio: np.ndarray   # (2,)

    def project(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return (x - self.mean) @ self.components.T


def fit_pca2(train) -> Pca2:
    """Top-2 principal directions of the training vectors (mean-centred)."""
    train = np.asarray(train, dtype=float)
    if train.ndim != 2 or train.shape[0] < 3:
        raise DegeneracyError("PCA needs at least 3 training vectors")
    mean = train.mean(axis=0)
    centred = train - mean
    _u, s, vt = np.linalg.svd(centred, full_matrices=False)
    if s.size < 2 or s[1] <= 1e-12 * max(s[0], 1.0):
        raise DegeneracyError("training data has rank < 2")
    var = s**2
    return Pca2(mean=mean, components=vt[:2],
                explained_ratio=var[:2] / var.sum())


def pca2(train, queries) -> np.ndarray:
    """2-D coordinates of the queries in the frame fitted on the training set."""
    return fit_pca2(train).project(queries)


def kde(values, n_grid: int = 256):
    """Gaussian KDE with Silverman bandwidth.

    Returns (grid, density).  The grid spans the data plus four bandwidths
    per side, wide enough that the trapezoid mass stays within 1e-3 of one
    even for two-point samples.  Constant data degenerates to a narrow
    spike with a warning.
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size < 2:
        raise DomainError("KDE needs at least 2 values")
    std = values.std(ddof=1)
    iqr = np.subtract(*np.percentile(values, [75, 25]))
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    if spread == 0.0:
        warnings.warn("zero-variance sample; KDE degenerates to a spike")
        h = max(abs(values[0]), 1.0) * 1e-3
    else:
        h = 0.9 * spread * values.size ** (-0.2)
    grid = np.linspace(values.min() - 4 * h, values.max() + 4 * h, n_grid)
    z = (grid[:, None] - values[None, :]) / h
    density = np.exp(-0.5 * z**2).sum(axis=1) / (values.size * h * math.sqrt(2 * math.pi))
    return grid, density


# ---------------------------------------------------------------------------
# Optimizer-vs-sampler comparison


@dataclass(frozen=True)
class ComparisonReport:
    """Counts of sampled hulls that beat the optimizer's best simulation."""

    nsga_min_rt: float
    counts: dict                 # tolerance band -> count of lower-R_T hulls
    sample_min_rt: float | None  # min simulated R_T inside the 5% band
    delta_rt: float | None       # (sample_min - nsga_min) / nsga_min
    n_feasible: int


def compare(audits_sampled, audits_nsga) -> ComparisonReport:
    """Count sampled hulls with simulated R_T below the optimizer minimum,
    per volume-error tolerance band."""
    nsga_rt = [a.simulated_rt for a in audits_nsga if a.feasible]
    if not nsga_rt or not audits_sampled:
        raise DomainError("comparison needs non-empty audit sets")
    nsga_min = min(nsga_rt)

    feas = [a for a in audits_sampled if a.feasible]
    counts = {}
    for tol in TOLERANCE_BANDS:
        inside = [a for a in feas if abs(a.vol_err) <= tol]
        counts[tol] = sum(1 for a in inside if a.simulated_rt < nsga_min)
    in_five = [a.simulated_rt for a in feas if abs(a.vol_err) <= 0.05]
    if in_five:
        sample_min = min(in_five)
        delta = (sample_min - nsga_min) / nsga_min
    else:
        sample_min = None
        delta = None
    return ComparisonReport(nsga_min_rt=float(nsga_min), counts=counts,
                            sample_min_rt=sample_min, delta_rt=delta,
                            n_feasible=len(feas))
