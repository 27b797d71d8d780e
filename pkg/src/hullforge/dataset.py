"""Hull dataset construction, quantile normalization, training rows.

A dataset holds n feasible hulls (with geometry curves and wave-resistance
grids) plus n constraint-violating bare design vectors for classifier
training.  Everything is a pure function of (n, seed, scheme constants):
records are generated from per-index child seeds, so worker count and
scheduling cannot change the result.
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import (FROUDE_RANGE, GRID_DRAFTS, GRID_FROUDE, LOA_RANGE,
                     LOG10_LOA_RANGE, TSTAR_RANGE, WaterConstants)
from .errors import DomainError, GenerationError, RepresentationError
from .geometry import (BOX_BOUNDS, DRAFT_MARKS, HULL_FIELDS, N_SHAPE,
                       SHAPE_NAMES, GeoCurves, HullParams, hull_from_row,
                       hull_to_row, measure_curves, validate)
from .hydro import (GRID_COLUMNS, ResistanceGrid, friction_coefficient,
                    grid_from_row, grid_to_row, interpolate_rw,
                    resistance_grid, speed_from_froude)

BULB_PROBABILITY = 0.25
REJECTION_BUDGET = 1000

_LO = np.array([BOX_BOUNDS[n][0] for n in SHAPE_NAMES])
_HI = np.array([BOX_BOUNDS[n][1] for n in SHAPE_NAMES])
_BULB_IDX = [SHAPE_NAMES.index(n) for n in ("bulb_len", "bulb_radius", "bulb_height")]


@dataclass(frozen=True)
class HullRecord:
    """One dataset entry; curves and grid are present iff the hull is feasible."""

    params: HullParams
    curves: GeoCurves | None
    grid: ResistanceGrid | None
    feasible: bool


def _random_loa(rng) -> float:
    lo, hi = np.log10(LOA_RANGE[0]), np.log10(LOA_RANGE[1])
    return float(10.0 ** rng.uniform(lo, hi))


def sample_random_hull(rng: np.random.Generator, *,
                       bulb_prob: float = BULB_PROBABILITY,
                       max_tries: int = REJECTION_BUDGET) -> HullParams:
    """Uniform draw inside the parameter box, rejected until the composite
    constraints pass.

    The bulb arm is decided first (probability ``bulb_prob``) and rejection
    happens within the arm, so the bulb share is preserved exactly.
    Bulbless hulls carry zeros for all three bulb parameters.
    """
    with_bulb = rng.random() < bulb_prob
    for _ in range(max_tries):
        shape = rng.uniform(_LO, _HI)
        if not with_bulb:
            shape[_BULB_IDX] = 0.0
        elif shape[_BULB_IDX[0]] == 0.0 or shape[_BULB_IDX[1]] == 0.0:
            continue  # the tie constraint wants both strictly positive
        params = HullParams(_random_loa(rng), shape)
        if validate(params).feasible:
            return params
    raise GenerationError(f"no feasible hull in {max_tries} draws")


def sample_infeasible_vector(rng: np.random.Generator) -> HullParams:
    """A design vector violating at least one composite constraint.

    One of the four composites is chosen and inverted on top of an
    otherwise ordinary box sample, keeping the vector near the feasibility
    boundary.  Inverting the rake-sum composite necessarily pushes the rakes
    past their box range (the sum cannot exceed 0.9 inside it).
    """
    kind = int(rng.integers(4))
    shape = rng.uniform(_LO, _HI)
    shape[_BULB_IDX] = 0.0
    i = SHAPE_NAMES.index
    if kind == 0:      # taper overlap: x_e + x_r > 0.95
        total = rng.uniform(0.96, 1.2)
        split = rng.uniform(0.4, 0.6)
        shape[i("run_frac")] = total * split
        shape[i("entrance_frac")] = total * (1.0 - split)
    elif kind == 1:    # rake sum > 0.9
        total = rng.uniform(0.91, 1.1)
        split = rng.uniform(0.3, 0.7)
        shape[i("bow_rake")] = total * split
        shape[i("stern_rake")] = total * (1.0 - split)
    elif kind == 2:    # bulb sticks out above the deck: z_u + rho_u > d
        d = shape[i("depth_ratio")]
        shape[i("bulb_radius")] = rng.uniform(0.5 * d, 0.15 + 0.5 * d)
        shape[i("bulb_height")] = rng.uniform(0.6 * d, 1.2 * d)
        shape[i("bulb_len")] = rng.uniform(0.01, 0.08)
        if shape[i("bulb_height")] + shape[i("bulb_radius")] <= d:
            shape[i("bulb_height")] = d  # force the violation
    else:              # bulb tie: length without radius
        shape[i("bulb_len")] = rng.uniform(0.01, 0.08)
        shape[i("bulb_radius")] = 0.0
    params = HullParams(_random_loa(rng), shape)
    if validate(params).feasible:   # cannot happen; guards future schemes
        raise GenerationError("constraint inversion produced a feasible vector")
    return params


def _build_one(args):
    seed, water, n_theta, nx, nz = args
    rng = np.random.default_rng(seed)
    params = sample_random_hull(rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        curves = measure_curves(params)
        grid = resistance_grid(params, water, n_theta=n_theta, nx=nx, nz=nz)
    return HullRecord(params, curves, grid, True)


def build_dataset(n: int, seed: int, *, water: WaterConstants | None = None,
                  n_theta: int = 384, nx: int = 512, nz: int = 48,
                  workers: int | None = None) -> list[HullRecord]:
    """n feasible records (curves + grids) followed by n infeasible vectors."""
    if n < 1:
        raise DomainError("dataset size must be >= 1")
    water = water or WaterConstants()
    seeds = np.random.SeedSequence(seed).spawn(n + 1)
    jobs = [(s, water, n_theta, nx, nz) for s in seeds[:n]]
    if workers is None or workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_build_one, jobs, chunksize=8))
    else:
        records = [_build_one(j) for j in jobs]

    bad_rng = np.random.default_rng(seeds[n])
    records.extend(
        HullRecord(sample_infeasible_vector(bad_rng), None, None, False)
        for _ in range(n))
    return records


# ---------------------------------------------------------------------------
# Quantile normalizer


@dataclass(frozen=True)
class Normalizer:
    """Per-parameter empirical quantile maps onto [-1, 1].

    ``knots_x[i]`` holds the sorted sample for parameter i, ``knots_u[i]``
    the matching uniform grid; tied sample values share their mid-rank so
    the forward map is single-valued.  Out-of-range raw values clamp to the
    interval ends.
    """

    knots_x: tuple          # per parameter: ascending raw knots
    knots_u: tuple          # per parameter: ascending [-1, 1] knots (forward map)
    inv_x: tuple            # per parameter: raw values for the inverse map
    inv_u: tuple            # per parameter: strictly increasing [-1, 1] grid
    identity: tuple         # parameter indices left untouched (zero variance)

    @property
    def dim(self) -> int:
        return len(self.knots_x)

    def normalize(self, raw):
        raw = np.asarray(raw, dtype=float)
        out = np.empty_like(raw)
        for i in range(self.dim):
            col = raw[..., i]
            if i in self.identity:
                out[..., i] = col
            else:
                out[..., i] = np.interp(col, self.knots_x[i], self.knots_u[i])
        return out

    def denormalize(self, unit):
        unit = np.asarray(unit, dtype=float)
        out = np.empty_like(unit)
        for i in range(self.dim):
            col = np.clip(unit[..., i], -1.0, 1.0)
            if i in self.identity:
                out[..., i] = col
            else:
                out[..., i] = np.interp(col, self.inv_u[i], self.inv_x[i])
        return out


def fit_normalizer(records_or_matrix, *, min_samples: int = 64) -> Normalizer:
    """Fit per-parameter quantile maps from the feasible sample.

    Accepts either dataset records (feasible ones are used) or a raw
    (n, dim) matrix.  Parameters with zero variance get an identity map and
    a warning.
    """
    if isinstance(records_or_matrix, np.ndarray):
        mat = np.asarray(records_or_matrix, dtype=float)
    else:
        mat = np.array([r.params.shape for r in records_or_matrix if r.feasible])
    if mat.ndim != 2 or mat.shape[0] < min_samples:
        raise DomainError(f"normalizer needs >= {min_samples} feasible samples")
    n, dim = mat.shape
    u_grid = np.linspace(-1.0, 1.0, n)

    knots_x, knots_u, inv_x, inv_u, identity = [], [], [], [], []
    for i in range(dim):
        xs = np.sort(mat[:, i])
        if xs[0] == xs[-1]:
            warnings.warn(f"parameter {i} has zero variance; identity mapping used")
            identity.append(i)
            knots_x.append(xs[:1])
            knots_u.append(np.zeros(1))
            inv_x.append(xs[:1])
            inv_u.append(np.zeros(1))
            continue
        # forward map: collapse tied values onto their mid-rank
        uniq, start = np.unique(xs, return_index=True)
        end = np.append(start[1:], n)
        mid_u = (u_grid[start] + u_grid[end - 1]) / 2.0
        knots_x.append(uniq)
        knots_u.append(mid_u)
        inv_x.append(xs)
        inv_u.append(u_grid)
    return Normalizer(tuple(knots_x), tuple(knots_u), tuple(inv_x), tuple(inv_u),
                      tuple(identity))


def save_normalizer(norm: Normalizer, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"quantile-normalizer dim={norm.dim}\n")
        fh.write("identity " + " ".join(map(str, norm.identity)) + "\n")
        for i in range(norm.dim):
            for tag, arr in (("kx", norm.knots_x[i]), ("ku", norm.knots_u[i]),
                             ("ix", norm.inv_x[i]), ("iu", norm.inv_u[i])):
                fh.write(f"{tag}{i} " + " ".join(repr(float(v)) for v in arr) + "\n")


def load_normalizer(path) -> Normalizer:
    with open(path) as fh:
        header = fh.readline().split()
        if not header or not header[0] == "quantile-normalizer":
            raise RepresentationError(f"not a normalizer file: {path}")
        dim = int(header[1].split("=")[1])
        identity = tuple(int(v) for v in fh.readline().split()[1:])
        blocks = {}
        for line in fh:
            parts = line.split()
            blocks[parts[0]] = np.array([float(v) for v in parts[1:]])
    def grab(tag):
        return tuple(blocks[f"{tag}{i}"] for i in range(dim))
    return Normalizer(grab("kx"), grab("ku"), grab("ix"), grab("iu"), identity)


# ---------------------------------------------------------------------------
# Training rows


@dataclass(frozen=True)
class TrainingRow:
    """One resistance-model training example."""

    x: np.ndarray        # normalized shape vector
    tstar: float
    fn: float
    log_loa: float       # log10 of LOA in meters
    c_t: float


def sample_training_row(record: HullRecord, normalizer: Normalizer,
                        rng: np.random.Generator,
                        water: WaterConstants | None = None) -> TrainingRow:
    """Draw (t*, F_n, log LOA) and chain the resistance formulas to C_T.

    Froude numbers below the wave-resistance grid floor use the clamped
    edge value (the grid starts at 0.10 while training samples down to
    0.05, where wave resistance is negligible against friction).
    """
    if not record.feasible:
        raise DomainError("training rows come from feasible records only")
    water = water or WaterConstants()
    tstar = float(rng.uniform(*TSTAR_RANGE))
    fn = float(rng.uniform(*FROUDE_RANGE))
    log_loa = float(rng.uniform(*LOG10_LOA_RANGE))
    loa = 10.0 ** log_loa

    marks = record.curves.draft_marks
    sa = float(np.interp(tstar, marks, record.curves.area))
    wl = float(np.interp(tstar, marks, record.curves.wl))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rw = interpolate_rw(record.grid, tstar, fn) * loa**3
    speed = speed_from_froude(fn, wl, loa, water.g)
    reynolds = speed * wl * loa / water.nu
    rf = 0.5 * friction_coefficient(reynolds) * water.rho * speed**2 * sa * loa**2
    c_t = np.log10((rw + rf) / (0.5 * water.rho * speed**2 * loa**2))
    return TrainingRow(normalizer.normalize(record.params.shape), tstar, fn,
                       log_loa, float(c_t))


@dataclass(frozen=True)
class StackedDataset:
    """Feasible-record arrays laid out for vectorized row sampling."""

    shapes: np.ndarray       # (n, 13) raw
    norm_shapes: np.ndarray  # (n, 13) normalized
    vols: np.ndarray         # (n, 100)
    areas: np.ndarray        # (n, 100)
    wls: np.ndarray          # (n, 100)
    rws: np.ndarray          # (n, 4, 8) at LOA = 1 m

    @property
    def n(self) -> int:
        return self.shapes.shape[0]


def stack_records(records, normalizer: Normalizer) -> StackedDataset:
    feas = [r for r in records if r.feasible]
    shapes = np.array([r.params.shape for r in feas])
    return StackedDataset(
        shapes=shapes,
        norm_shapes=normalizer.normalize(shapes),
        vols=np.array([r.curves.vol for r in feas]),
        areas=np.array([r.curves.area for r in feas]),
        wls=np.array([r.curves.wl for r in feas]),
        rws=np.array([r.grid.rw for r in feas]),
    )


def _interp_marks(table: np.ndarray, idx: np.ndarray, tstar: np.ndarray) -> np.ndarray:
    """table[idx] linearly interpolated at tstar along the draft marks."""
    pos = np.clip((tstar - DRAFT_MARKS[0]) / (DRAFT_MARKS[1] - DRAFT_MARKS[0]),
                  0.0, DRAFT_MARKS.size - 1.000001)
    k = pos.astype(int)
    frac = pos - k
    return table[idx, k] * (1.0 - frac) + table[idx, k + 1] * frac


def _interp_grid(rws: np.ndarray, idx: np.ndarray, tstar: np.ndarray,
                 fn: np.ndarray) -> np.ndarray:
    drafts = np.asarray(GRID_DRAFTS)
    froude = np.asarray(GRID_FROUDE)
    fn = np.clip(fn, froude[0], froude[-1])
    tstar = np.clip(tstar, drafts[0], drafts[-1])
    i = np.clip(np.searchsorted(drafts, tstar, side="right"), 1, drafts.size - 1)
    j = np.clip(np.searchsorted(froude, fn, side="right"), 1, froude.size - 1)
    ft = (tstar - drafts[i - 1]) / (drafts[i] - drafts[i - 1])
    ff = (fn - froude[j - 1]) / (froude[j] - froude[j - 1])
    g00 = rws[idx, i - 1, j - 1]
    g01 = rws[idx, i - 1, j]
    g10 = rws[idx, i, j - 1]
    g11 = rws[idx, i, j]
    return (g00 * (1 - ft) * (1 - ff) + g01 * (1 - ft) * ff
            + g10 * ft * (1 - ff) + g11 * ft * ff)


def resistance_rows(data: StackedDataset, rng: np.random.Generator, n_rows: int,
                    water: WaterConstants | None = None,
                    record_idx: np.ndarray | None = None):
    """Vectorized Table-style training rows: X = [x_hat, t*, F_n, log LOA], y = C_T."""
    water = water or WaterConstants()
    idx = (rng.integers(0, data.n, n_rows) if record_idx is None
           else np.asarray(record_idx))
    tstar = rng.uniform(*TSTAR_RANGE, n_rows)
    fn = rng.uniform(*FROUDE_RANGE, n_rows)
    log_loa = rng.uniform(*LOG10_LOA_RANGE, n_rows)
    loa = 10.0 ** log_loa

    sa = _interp_marks(data.areas, idx, tstar)
    wl = _interp_marks(data.wls, idx, tstar)
    rw = _interp_grid(data.rws, idx, tstar, fn) * loa**3
    speed = fn * np.sqrt(water.g * wl * loa)
    reynolds = speed * wl * loa / water.nu
    cf = 0.075 / (np.log10(reynolds) - 2.0) ** 2
    rf = 0.5 * cf * water.rho * speed**2 * sa * loa**2
    c_t = np.log10((rw + rf) / (0.5 * water.rho * speed**2 * loa**2))

    x = np.column_stack([data.norm_shapes[idx], tstar, fn, log_loa])
    return x, c_t


def geometry_rows(data: StackedDataset, rng: np.random.Generator, n_rows: int,
                  record_idx: np.ndarray | None = None):
    """Rows for the volume / waterline regressors: X = [x_hat, t*].

    Drafts span the full conditioning range (0.01, 1.0] because these
    models are queried at conditioning time, not just at simulation drafts.
    """
    idx = (rng.integers(0, data.n, n_rows) if record_idx is None
           else np.asarray(record_idx))
    tstar = rng.uniform(0.01, 1.0, n_rows)
    vol = _interp_marks(data.vols, idx, tstar)
    wl = _interp_marks(data.wls, idx, tstar)
    x = np.column_stack([data.norm_shapes[idx], tstar])
    return x, np.log10(vol), wl


def classifier_rows(records, normalizer: Normalizer):
    """All dataset vectors with feasibility labels, normalized."""
    raw = np.array([r.params.shape for r in records])
    labels = np.array([1.0 if r.feasible else 0.0 for r in records])
    return normalizer.normalize(raw), labels


# ---------------------------------------------------------------------------
# CSV serialization

_CURVE_COLUMNS = tuple(f"{kind}_{k:03d}" for kind in ("vol", "area", "wl")
                       for k in range(1, DRAFT_MARKS.size + 1))
DATASET_FIELDS = HULL_FIELDS + ("feasible",) + _CURVE_COLUMNS + GRID_COLUMNS


def write_dataset_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATASET_FIELDS)
        for rec in records:
            row = [repr(float(v)) for v in hull_to_row(rec.params)]
            row.append("1" if rec.feasible else "0")
            if rec.feasible:
                for arr in (rec.curves.vol, rec.curves.area, rec.curves.wl):
                    row.extend(repr(float(v)) for v in arr)
                row.extend(repr(float(v)) for v in grid_to_row(rec.grid))
            else:
                row.extend([""] * (len(_CURVE_COLUMNS) + len(GRID_COLUMNS)))
            writer.writerow(row)


def read_dataset_csv(path) -> list[HullRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != DATASET_FIELDS:
            raise RepresentationError(f"unexpected dataset header in {path}")
        nh = len(HULL_FIELDS)
        nc = DRAFT_MARKS.size
        for row in reader:
            params = hull_from_row(row[:nh])
            feasible = row[nh] == "1"
            if not feasible:
                records.append(HullRecord(params, None, None, False))
                continue
            vals = [float(v) for v in row[nh + 1:]]
            vol = np.array(vals[:nc])
            area = np.array(vals[nc:2 * nc])
            wl = np.array(vals[2 * nc:3 * nc])
            grid = grid_from_row(vals[3 * nc:])
            curves = GeoCurves(DRAFT_MARKS.copy(), vol, area, wl)
            records.append(HullRecord(params, curves, grid, True))
    return records


def write_meta(path, entries: dict) -> None:
    with open(path, "w") as fh:
        for key in sorted(entries):
            fh.write(f"{key} = {entries[key]}\n")


def read_meta(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                key, val = line.split("=", 1)
                out[key.strip()] = val.strip()
    return out
