"""Parametric hull surface and draft-indexed geometric measures.

The hull is described by an overall length ``loa`` (meters) plus 13
dimensionless shape parameters.  All geometry below works in fractions of
LOA: ``x`` runs from 0 at the stern to 1 at the bow, heights are measured
up from the keel, and ``zeta`` is height as a fraction of the depth.

Surface recipe (separable):

* raked profile        X_aft(zeta) = r_s (1 - zeta),  X_fwd(zeta) = 1 - r_b (1 - zeta)
* waterplane factor    W = min(1, ((x - X_aft)/x_r)^(1/p_r), ((X_fwd - x)/x_e)^(1/p_e))
* section factor       S = min(1, (zeta/k_b)^(1/p_s))          (S == 1 when k_b == 0)
* half-breadth         y(x, zeta) = (b/2) W S, zero outside the profile
* optional bow bulb: an ellipsoid of semi-length l_u and radius rho_u
  centred on the centreline at height z_u, protruding forward of the local
  bow profile.  The centre is pulled aft to 1 - l_u if needed so the hull
  never exceeds unit length, and the surface is max(hull, bulb) so it
  stays single-valued.

``run_frac = 0`` / ``entrance_frac = 0`` are accepted as degenerate
"no taper" limits (vertical transom / stem).  They sit outside the
sampling box and exist so closed-form prism hulls are exactly
representable for verification.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FeasibilityError, RepresentationError

SHAPE_NAMES = (
    "beam_ratio",        # b   = BOA / LOA
    "depth_ratio",       # d   = D / LOA
    "run_frac",          # x_r length of the aft taper
    "entrance_frac",     # x_e length of the forward taper
    "run_fullness",      # p_r
    "entrance_fullness", # p_e
    "section_fullness",  # p_s
    "deadrise_frac",     # k_b height (fraction of depth) where sections reach full beam
    "bow_rake",          # r_b
    "stern_rake",        # r_s
    "bulb_len",          # l_u semi-length of the bow bulb (fraction of LOA)
    "bulb_radius",       # rho_u
    "bulb_height",       # z_u  centre height of the bulb (fraction of LOA)
)
N_SHAPE = len(SHAPE_NAMES)

BOX_BOUNDS = {
    "beam_ratio": (0.02, 0.5),
    "depth_ratio": (0.02, 0.3),
    "run_frac": (0.05, 0.6),
    "entrance_frac": (0.05, 0.6),
    "run_fullness": (0.5, 4.0),
    "entrance_fullness": (0.5, 4.0),
    "section_fullness": (0.5, 6.0),
    "deadrise_frac": (0.0, 0.5),
    "bow_rake": (0.0, 0.3),
    "stern_rake": (0.0, 0.3),
    "bulb_len": (0.0, 0.08),
    "bulb_radius": (0.0, 0.15),
    "bulb_height": (0.0, 0.15),
}

LOA_BOUNDS = (3.0, 450.0)

# 100 evenly spaced draft marks in (0, 1].
DRAFT_MARKS = np.linspace(0.01, 1.0, 100)

# Default section-integration resolution (z-stations per draft mark, x-stations).
MEASURE_NZ = 200
MEASURE_NX = 256


@dataclass(frozen=True)
class HullParams:
    """Length overall plus the 13 shape parameters, in SHAPE_NAMES order."""

    loa: float
    shape: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.shape, dtype=float)
        if arr.shape != (N_SHAPE,):
            raise RepresentationError(
                f"shape vector must have {N_SHAPE} entries, got {arr.shape}")
        if not np.all(np.isfinite(arr)) or not np.isfinite(self.loa):
            raise RepresentationError("hull parameters must be finite")
        object.__setattr__(self, "shape", arr)

    def __getattr__(self, name):
        # guard first: unpickling probes attributes before `shape` exists
        if name not in SHAPE_NAMES:
            raise AttributeError(name)
        return self.shape[SHAPE_NAMES.index(name)]

    def with_shape(self, **updates) -> "HullParams":
        arr = self.shape.copy()
        for key, val in updates.items():
            arr[SHAPE_NAMES.index(key)] = val
        return HullParams(self.loa, arr)


@dataclass(frozen=True)
class FeasibilityReport:
    """Signed residuals for every constraint; positive residual = violated."""

    feasible: bool
    violations: tuple          # ((constraint id, residual > 0), ...)
    residuals: dict            # constraint id -> signed residual


@dataclass(frozen=True)
class GeoCurves:
    """Normalized volume / wetted area / waterline length at the draft marks.

    vol is normalized by LOA^3, area by LOA^2, wl by LOA; all are therefore
    independent of the hull's actual length.
    """

    draft_marks: np.ndarray
    vol: np.ndarray
    area: np.ndarray
    wl: np.ndarray


@dataclass(frozen=True)
class SlopeField:
    """Longitudinal slope dy/dx sampled over the submerged centerplane.

    x and z are node coordinates in meters (z <= 0, measured down from the
    waterline); dydx is indexed [x, z] and is dimensionless.
    """

    x: np.ndarray
    z: np.ndarray
    dydx: np.ndarray


_COMPOSITES = ("taper_overlap", "rake_sum", "bulb_clearance", "bulb_tie")


def validate(params: HullParams) -> FeasibilityReport:
    """Evaluate all box and composite constraints.

    Residuals are continuous in the parameters (the bulb tie residual is
    continuous everywhere except across the ``exactly one of l_u, rho_u is
    zero`` axis, which is the constraint's own boundary).
    """
    s = params.shape
    residuals = {}
    lo, hi = LOA_BOUNDS
    residuals["loa"] = max(lo - params.loa, params.loa - hi)
    for i, name in enumerate(SHAPE_NAMES):
        blo, bhi = BOX_BOUNDS[name]
        residuals[name] = max(blo - s[i], s[i] - bhi)
    residuals["taper_overlap"] = params.entrance_frac + params.run_frac - 0.95
    residuals["rake_sum"] = params.bow_rake + params.stern_rake - 0.9
    residuals["bulb_clearance"] = params.bulb_height + params.bulb_radius - params.depth_ratio
    l_u, rho_u = params.bulb_len, params.bulb_radius
    residuals["bulb_tie"] = max(l_u, rho_u) if min(l_u, rho_u) == 0.0 else 0.0

    violations = tuple((k, v) for k, v in residuals.items() if v > 0)
    return FeasibilityReport(feasible=not violations, violations=violations,
                             residuals=residuals)


def require_evaluable(params: HullParams) -> None:
    """Raise FeasibilityError unless the surface formulas are well defined.

    This is validate() with the lower box bounds of the taper lengths
    relaxed to zero, so degenerate prism limits stay usable by the
    measurement oracles while every other violation is rejected.
    """
    report = validate(params)
    if report.feasible:
        return
    bad = []
    for name, res in report.violations:
        if name in ("run_frac", "entrance_frac") and 0.0 <= getattr(params, name):
            continue
        if name == "loa" and params.loa > 0.0:
            # geometry is scale-free; the loa box is a sampling range, and
            # resistance grids are evaluated at a reference LOA of 1 m
            continue
        bad.append((name, res))
    if bad:
        raise FeasibilityError(f"infeasible hull parameters: {bad}")


def _bulb_center(params) -> float:
    zeta_u = params.bulb_height / params.depth_ratio
    local_bow = 1.0 - params.bow_rake * (1.0 - zeta_u)
    return min(local_bow, 1.0 - params.bulb_len)


def _half_breadth_grid(params: HullParams, x, zeta):
    """Vectorized y(x, zeta) over broadcastable arrays, in fractions of LOA."""
    s = params
    x = np.asarray(x, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    one_minus = 1.0 - zeta
    x_aft = s.stern_rake * one_minus
    x_fwd = 1.0 - s.bow_rake * one_minus
    inside = (x >= x_aft) & (x <= x_fwd)

    if s.run_frac > 0.0:
        u = np.clip((x - x_aft) / s.run_frac, 0.0, 1.0)
        w_run = u ** (1.0 / s.run_fullness)
    else:
        w_run = np.ones(np.broadcast(x, zeta).shape)
    if s.entrance_frac > 0.0:
        u = np.clip((x_fwd - x) / s.entrance_frac, 0.0, 1.0)
        w_ent = u ** (1.0 / s.entrance_fullness)
    else:
        w_ent = np.ones(np.broadcast(x, zeta).shape)
    w = np.minimum(w_run, w_ent)

    if s.deadrise_frac > 0.0:
        sec = np.clip(zeta / s.deadrise_frac, 0.0, 1.0) ** (1.0 / s.section_fullness)
    else:
        sec = np.ones_like(zeta)

    y = 0.5 * s.beam_ratio * w * sec * inside

    if s.bulb_len > 0.0:
        xc = _bulb_center(s)
        dx = (x - xc) / s.bulb_len
        dz = (zeta * s.depth_ratio - s.bulb_height) / s.bulb_radius
        rad = 1.0 - dx * dx - dz * dz
        y = np.maximum(y, s.bulb_radius * np.sqrt(np.clip(rad, 0.0, None)))
    return y


def half_breadth(params: HullParams, x, zeta):
    """Hull half-breadth (fraction of LOA) at longitudinal fraction ``x``
    and height fraction ``zeta``; zero outside the raked profile."""
    require_evaluable(params)
    out = _half_breadth_grid(params, x, zeta)
    if np.isscalar(x) and np.isscalar(zeta):
        return float(out)
    return out


def waterline_bounds(params: HullParams, tstar: float) -> tuple:
    """(X_aft, X_fwd) of the waterline at draft ratio tstar, LOA fractions."""
    x_aft = params.stern_rake * (1.0 - tstar)
    x_fwd = 1.0 - params.bow_rake * (1.0 - tstar)
    return x_aft, x_fwd


def _shell_band_areas(y, x, zeta_m):
    """Mesh area of the hull shell per height band, both sides combined.

    The sampled surface is triangulated and summed per z band; chordal
    areas stay accurate (and refine monotonically) even where the analytic
    slope blows up at the keel or the profile ends.  Quads whose corners
    all sit on the centerplane are not hull surface and are skipped.

    y is (nz, nx); x and zeta_m (heights in LOA units) are 1-D.
    Returns an (nz-1,) array of band areas.
    """
    dx = x[1] - x[0]
    dz = zeta_m[1] - zeta_m[0]
    flat = (dx * dz) ** 2
    # cross products written out for the structured grid: triangle pairs
    # anchored at the lower-left and upper-right corners of each quad
    a = y[:-1, 1:] - y[:-1, :-1]
    b = y[1:, :-1] - y[:-1, :-1]
    c = y[:-1, 1:] - y[1:, 1:]
    e = y[1:, :-1] - y[1:, 1:]
    tri = np.sqrt(a * a * dz * dz + flat + b * b * dx * dx)
    tri += np.sqrt(e * e * dz * dz + flat + c * c * dx * dx)
    hull = (y[:-1, :-1] > 0) | (y[:-1, 1:] > 0) | (y[1:, :-1] > 0) | (y[1:, 1:] > 0)
    return (tri * hull).sum(axis=1)


def _measure_one(params, tstar, nz, nx):
    """(V, SA, WL) at a single draft mark."""
    s = params
    zeta = np.linspace(0.0, tstar, nz)[:, None]
    x = np.linspace(0.0, 1.0, nx)[None, :]
    y = _half_breadth_grid(s, x, zeta)

    d = s.depth_ratio
    vol = 2.0 * d * np.trapezoid(np.trapezoid(y, x[0], axis=1), zeta[:, 0])
    shell = _shell_band_areas(y, x[0], zeta[:, 0] * d).sum()

    # flat bottom closes the hull when sections carry beam at the keel
    bottom = 2.0 * np.trapezoid(y[0], x[0])

    # vertical end caps appear only in the degenerate no-taper, no-rake limits
    caps = 0.0
    if s.run_frac == 0.0 and s.stern_rake == 0.0:
        caps += 2.0 * d * np.trapezoid(y[:, 0], zeta[:, 0])
    if s.entrance_frac == 0.0 and s.bow_rake == 0.0:
        caps += 2.0 * d * np.trapezoid(y[:, -1], zeta[:, 0])

    x_aft, x_fwd = waterline_bounds(s, tstar)
    return vol, shell + bottom + caps, x_fwd - x_aft


def measure_at(params: HullParams, tstar: float, *, nz: int = MEASURE_NZ,
               nx: int = MEASURE_NX) -> tuple:
    """(V, SA, WL), LOA-normalized, at one draft ratio in (0, 1]."""
    require_evaluable(params)
    if not 0.0 < tstar <= 1.0:
        raise DomainError(f"draft ratio must be in (0, 1], got {tstar}")
    return _measure_one(params, tstar, nz, nx)


def measure_curves(params: HullParams, *, substations: int = 20,
                   nx: int = MEASURE_NX) -> GeoCurves:
    """Integrate sections at the 100 draft marks.

    Volume is normalized by LOA^3, wetted area by LOA^2 (bottom, sides and
    submerged transom end caps; nothing above the waterline), waterline
    length by LOA.

    All marks share one global height grid (``substations`` trapezoid
    stations per mark band, nodes placed exactly on the marks) and the
    per-mark values are cumulative sums of the band integrals.  Band
    contributions are non-negative, so volume and area are non-decreasing
    across marks by construction.
    """
    require_evaluable(params)
    s = params
    d = s.depth_ratio
    n_marks = DRAFT_MARKS.size
    zeta = np.linspace(0.0, 1.0, n_marks * substations + 1)[:, None]
    x = np.linspace(0.0, 1.0, nx)[None, :]
    y = _half_breadth_grid(s, x, zeta)

    width = np.trapezoid(y, x[0], axis=1)              # waterplane half-area
    shell_bands = _shell_band_areas(y, x[0], zeta[:, 0] * d)
    cap_rows = np.zeros_like(width)
    if s.run_frac == 0.0 and s.stern_rake == 0.0:
        cap_rows += y[:, 0]
    if s.entrance_frac == 0.0 and s.bow_rake == 0.0:
        cap_rows += y[:, -1]

    dz = zeta[1, 0] - zeta[0, 0]
    def cumulative(bands):
        return np.cumsum(bands)[substations - 1::substations]

    vol = 2.0 * d * cumulative(0.5 * (width[1:] + width[:-1]) * dz)
    bottom = 2.0 * np.trapezoid(y[0], x[0])
    caps = 2.0 * d * cumulative(0.5 * (cap_rows[1:] + cap_rows[:-1]) * dz)
    area = cumulative(shell_bands) + caps + bottom
    wl = 1.0 - (s.bow_rake + s.stern_rake) * (1.0 - DRAFT_MARKS)
    return GeoCurves(DRAFT_MARKS.copy(), vol, area, wl)


def interpolate_curves(curves: GeoCurves, tstar: float) -> tuple:
    """Piecewise-linear (V, SA, WL) between draft marks; exact at marks.

    Queries below the first mark clamp to it (volume there is effectively
    zero anyway at desk scale); queries outside (0, 1] are rejected.
    """
    if not 0.0 < tstar <= 1.0:
        raise DomainError(f"draft ratio must be in (0, 1], got {tstar}")
    t = curves.draft_marks
    return (float(np.interp(tstar, t, curves.vol)),
            float(np.interp(tstar, t, curves.area)),
            float(np.interp(tstar, t, curves.wl)))


def centerplane_slopes(params: HullParams, tstar: float, nx: int, nz: int) -> SlopeField:
    """Central-difference dy/dx on a uniform grid over the submerged
    centerplane, with node coordinates in meters for this hull's LOA.

    z runs from -draft to 0 (waterline).  The x extent covers the waterline
    between the raked profile endpoints, widened if a bow bulb protrudes
    past the local stem.
    """
    require_evaluable(params)
    if not 0.0 < tstar <= 1.0:
        raise DomainError(f"draft ratio must be in (0, 1], got {tstar}")
    if nx < 8 or nz < 8:
        raise DomainError("slope grids need nx, nz >= 8")
    s = params
    x_aft, x_fwd = waterline_bounds(s, tstar)
    if s.bulb_len > 0.0:
        x_fwd = max(x_fwd, _bulb_center(s) + s.bulb_len)
    loa = s.loa
    draft_m = tstar * s.depth_ratio * loa
    x_m = np.linspace(x_aft, x_fwd, nx) * loa
    z_m = np.linspace(-draft_m, 0.0, nz)
    zeta = (z_m / loa + tstar * s.depth_ratio) / s.depth_ratio
    y_m = loa * _half_breadth_grid(s, (x_m / loa)[:, None], zeta[None, :])
    dydx = np.gradient(y_m, x_m, axis=0)
    return SlopeField(x=x_m, z=z_m, dydx=dydx)


# ---------------------------------------------------------------------------
# CSV row form: loa followed by the 13 named shape parameters.

HULL_FIELDS = ("loa",) + SHAPE_NAMES


def hull_to_row(params: HullParams) -> list:
    return [params.loa] + [float(v) for v in params.shape]


def hull_from_row(values) -> HullParams:
    vals = [float(v) for v in values]
    if len(vals) != 1 + N_SHAPE:
        raise RepresentationError(f"hull row needs {1 + N_SHAPE} values, got {len(vals)}")
    return HullParams(vals[0], np.array(vals[1:]))


def write_hull_csv(path, hulls) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HULL_FIELDS)
        for h in hulls:
            writer.writerow([repr(float(v)) for v in hull_to_row(h)])


def read_hull_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != HULL_FIELDS:
            raise RepresentationError(f"unexpected hull CSV header in {path}")
        return [hull_from_row(row) for row in reader]
