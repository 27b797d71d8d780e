import math
import warnings

import numpy as np
import pytest

from hullforge.config import WaterConstants
from hullforge.dataset import (DATASET_FIELDS, Normalizer, build_dataset,
                               classifier_rows, fit_normalizer, geometry_rows,
                               load_normalizer, read_dataset_csv, read_meta,
                               resistance_rows, sample_infeasible_vector,
                               sample_random_hull, sample_training_row,
                               save_normalizer, stack_records,
                               write_dataset_csv, write_meta)
from hullforge.errors import DomainError
from hullforge.geometry import validate
from hullforge.hydro import interpolate_rw


def test_sample_random_hull_deterministic():
    a = sample_random_hull(np.random.default_rng(42))
    b = sample_random_hull(np.random.default_rng(42))
    assert a.loa == b.loa
    assert np.array_equal(a.shape, b.shape)


def test_random_hulls_always_feasible():
    rng = np.random.default_rng(1)
    for _ in range(500):
        assert validate(sample_random_hull(rng)).feasible


def test_bulb_fraction_matches_probability():
    rng = np.random.default_rng(9)
    n = 10_000
    bulbs = sum(1 for _ in range(n)
                if sample_random_hull(rng).bulb_len > 0)
    assert bulbs / n == pytest.approx(0.25, abs=0.02)


def test_infeasible_vectors_violate_and_cover_all_kinds():
    rng = np.random.default_rng(3)
    kinds = set()
    for _ in range(200):
        params = sample_infeasible_vector(rng)
        report = validate(params)
        assert not report.feasible
        kinds.update(name for name, _ in report.violations)
    assert {"taper_overlap", "rake_sum", "bulb_clearance",
            "bulb_tie"} <= kinds


def test_build_dataset_counts_and_invariants(mini_records):
    feas = [r for r in mini_records if r.feasible]
    infeas = [r for r in mini_records if not r.feasible]
    assert len(feas) == len(infeas) == 64
    for rec in feas:
        assert rec.curves is not None and rec.grid is not None
        assert np.all(np.diff(rec.curves.vol) >= -1e-15)
        assert np.all(np.diff(rec.curves.area) >= -1e-12)
        assert np.all(rec.grid.rw >= 0)
    for rec in infeas:
        assert rec.curves is None and rec.grid is None


def test_build_dataset_schedule_independent():
    serial = build_dataset(6, seed=11, workers=1, n_theta=96, nx=128, nz=24)
    parallel = build_dataset(6, seed=11, workers=2, n_theta=96, nx=128, nz=24)
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.params.shape, b.params.shape)
        if a.feasible:
            assert np.array_equal(a.grid.rw, b.grid.rw)


def test_build_dataset_rejects_bad_count():
    with pytest.raises(DomainError):
        build_dataset(0, seed=1)


# -- normalizer ---------------------------------------------------------------

def test_normalizer_fitted_sample_roundtrip(mini_records, mini_normalizer):
    shapes = np.array([r.params.shape for r in mini_records if r.feasible])
    back = mini_normalizer.denormalize(mini_normalizer.normalize(shapes))
    assert np.abs(back - shapes).max() < 1e-9


def test_normalizer_continuous_sample_endpoints_and_median():
    rng = np.random.default_rng(0)
    n = 257
    mat = rng.uniform(2.0, 5.0, (n, 3))
    norm = fit_normalizer(mat)
    for i in range(3):
        col = np.sort(mat[:, i])
        got = norm.normalize(mat)[:, i]
        assert got.min() == pytest.approx(-1.0, abs=1e-12)
        assert got.max() == pytest.approx(1.0, abs=1e-12)
        med = np.median(col)
        assert norm.normalize(np.tile(med, (1, 3)))[0, i] == pytest.approx(
            0.0, abs=1.0 / n)


def test_normalizer_heldout_roundtrip_close():
    rng = np.random.default_rng(5)
    n = 1024
    mat = rng.uniform(0.0, 1.0, (n, 2))
    norm = fit_normalizer(mat)
    held = rng.uniform(0.05, 0.95, (100, 2))
    back = norm.denormalize(norm.normalize(held))
    assert np.abs(back - held).max() < 2.0 / n


def test_normalizer_monotone_and_clamped():
    rng = np.random.default_rng(2)
    mat = rng.normal(size=(512, 1))
    norm = fit_normalizer(mat)
    grid = np.linspace(mat.min() - 1, mat.max() + 1, 200)[:, None]
    out = norm.normalize(grid)[:, 0]
    assert np.all(np.diff(out) >= 0)
    assert out[0] == -1.0 and out[-1] == 1.0
    assert np.abs(norm.denormalize(np.array([[1.7]]))[0, 0] - mat.max()) < 1e-12


def test_normalizer_uniformizes():
    # empirical CDF of normalized values is uniform up to rank ties
    rng = np.random.default_rng(8)
    mat = rng.lognormal(size=(1024, 1))
    norm = fit_normalizer(mat)
    u = np.sort((norm.normalize(mat)[:, 0] + 1.0) / 2.0)
    ks = np.abs(u - (np.arange(1024) + 0.5) / 1024).max()
    assert ks < 0.05


def test_normalizer_zero_variance_identity():
    mat = np.column_stack([np.full(100, 3.3), np.linspace(0, 1, 100)])
    with pytest.warns(UserWarning, match="zero variance"):
        norm = fit_normalizer(mat)
    out = norm.normalize(mat)
    assert np.allclose(out[:, 0], 3.3)


def test_normalizer_needs_enough_samples():
    with pytest.raises(DomainError):
        fit_normalizer(np.random.default_rng(0).uniform(size=(10, 2)))


def test_normalizer_save_load_roundtrip(tmp_path, mini_normalizer):
    path = tmp_path / "norm.txt"
    save_normalizer(mini_normalizer, path)
    back = load_normalizer(path)
    probe = np.random.default_rng(0).uniform(-1, 1, (50, mini_normalizer.dim))
    assert np.array_equal(back.denormalize(probe),
                          mini_normalizer.denormalize(probe))


# -- training rows ------------------------------------------------------------

def test_training_row_deterministic(mini_records, mini_normalizer):
    rec = next(r for r in mini_records if r.feasible)
    a = sample_training_row(rec, mini_normalizer, np.random.default_rng(7))
    b = sample_training_row(rec, mini_normalizer, np.random.default_rng(7))
    assert a.c_t == b.c_t and a.tstar == b.tstar and a.fn == b.fn
    assert np.array_equal(a.x, b.x)


def test_training_row_hand_chain(mini_records, mini_normalizer):
    rec = next(r for r in mini_records if r.feasible)
    row = sample_training_row(rec, mini_normalizer, np.random.default_rng(123))
    water = WaterConstants()
    loa = 10.0 ** row.log_loa
    marks = rec.curves.draft_marks
    sa = np.interp(row.tstar, marks, rec.curves.area)
    wl = np.interp(row.tstar, marks, rec.curves.wl)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rw = interpolate_rw(rec.grid, row.tstar, row.fn) * loa**3
    speed = row.fn * math.sqrt(water.g * wl * loa)
    re = speed * wl * loa / water.nu
    cf = 0.075 / (math.log10(re) - 2.0) ** 2
    rf = 0.5 * cf * water.rho * speed**2 * sa * loa**2
    expected = math.log10((rw + rf) / (0.5 * water.rho * speed**2 * loa**2))
    assert row.c_t == pytest.approx(expected, rel=1e-12)


def test_training_rows_finite_bulk(mini_stacked):
    rng = np.random.default_rng(0)
    x, y = resistance_rows(mini_stacked, rng, 10_000)
    assert x.shape == (10_000, 16)
    assert np.isfinite(y).all()
    assert np.all((x[:, 13] >= 0.25) & (x[:, 13] <= 0.67))
    assert np.all((x[:, 14] >= 0.05) & (x[:, 14] <= 0.45))
    assert np.all((x[:, 15] >= 0.47) & (x[:, 15] <= 2.65))


def test_vector_rows_match_hand_chain(mini_stacked):
    rng = np.random.default_rng(4)
    x, y = resistance_rows(mini_stacked, rng, 64)
    # recompute one row independently from the stacked tables
    k = 17
    tstar, fn, log_loa = x[k, 13], x[k, 14], x[k, 15]
    idx = np.argmin(np.abs(mini_stacked.norm_shapes - x[k, :13]).sum(axis=1))
    water = WaterConstants()
    loa = 10.0 ** log_loa
    marks = np.linspace(0.01, 1.0, 100)
    sa = np.interp(tstar, marks, mini_stacked.areas[idx])
    wl = np.interp(tstar, marks, mini_stacked.wls[idx])
    from hullforge.hydro import ResistanceGrid
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rw = interpolate_rw(ResistanceGrid(rw=mini_stacked.rws[idx]),
                            float(tstar), float(max(fn, 0.10))) * loa**3
    speed = fn * math.sqrt(water.g * wl * loa)
    re = speed * wl * loa / water.nu
    cf = 0.075 / (math.log10(re) - 2.0) ** 2
    rf = 0.5 * cf * water.rho * speed**2 * sa * loa**2
    expected = math.log10((rw + rf) / (0.5 * water.rho * speed**2 * loa**2))
    assert y[k] == pytest.approx(expected, rel=1e-9)


def test_geometry_rows_ranges(mini_stacked):
    x, logv, wl = geometry_rows(mini_stacked, np.random.default_rng(1), 2048)
    assert x.shape == (2048, 14)
    assert np.isfinite(logv).all() and np.isfinite(wl).all()
    assert np.all((x[:, 13] >= 0.01) & (x[:, 13] <= 1.0))
    assert np.all(wl > 0) and np.all(wl <= 1.0)


def test_classifier_rows_balanced(mini_records, mini_normalizer):
    x, y = classifier_rows(mini_records, mini_normalizer)
    assert x.shape == (128, 13)
    assert y.sum() == 64
    assert np.all(np.abs(x) <= 1.0)


def test_training_row_rejects_infeasible(mini_records, mini_normalizer):
    rec = next(r for r in mini_records if not r.feasible)
    with pytest.raises(DomainError):
        sample_training_row(rec, mini_normalizer, np.random.default_rng(0))


# -- serialization ------------------------------------------------------------

def test_dataset_csv_roundtrip(tmp_path, mini_records):
    path = tmp_path / "hulls.csv"
    write_dataset_csv(mini_records, path)
    back = read_dataset_csv(path)
    assert len(back) == len(mini_records)
    for a, b in zip(mini_records, back):
        assert a.feasible == b.feasible
        assert np.array_equal(a.params.shape, b.params.shape)
        if a.feasible:
            assert np.array_equal(a.curves.vol, b.curves.vol)
            assert np.array_equal(a.grid.rw, b.grid.rw)
    with open(path) as fh:
        assert tuple(fh.readline().strip().split(",")) == DATASET_FIELDS


def test_meta_roundtrip(tmp_path):
    path = tmp_path / "info.meta"
    write_meta(path, {"seed": 7, "rho": 1025.0, "scheme": "separable-13"})
    back = read_meta(path)
    assert back["seed"] == "7"
    assert back["scheme"] == "separable-13"
