import math

import numpy as np
import pytest

from hullforge.config import TestCase, WaterConstants
from hullforge.errors import DomainError
from hullforge.geometry import measure_at
from hullforge.neural import init_mlp
from hullforge.optimize import (Individual, Problem, crowding_distance,
                                evaluate_individual, fast_nondominated_sort,
                                make_hull_problem, nsga2, polynomial_mutation,
                                population_summary, sbx_crossover)
from conftest import make_hull


def _ind(f1, f2, violation=0.0):
    return Individual(x=np.zeros(1), objectives=np.array([f1, f2]),
                      violation=violation)


def _brute_force_ranks(objs):
    """Independent domination count oracle (feasible points only)."""
    n = len(objs)
    remaining = set(range(n))
    ranks = [None] * n
    level = 0
    while remaining:
        front = [p for p in remaining
                 if not any(np.all(np.array(objs[q]) <= np.array(objs[p]))
                            and np.any(np.array(objs[q]) < np.array(objs[p]))
                            for q in remaining if q != p)]
        for p in front:
            ranks[p] = level
            remaining.discard(p)
        level += 1
    return ranks


def test_nondominated_sort_hand_built_set():
    objs = [(1.0, 5.0), (5.0, 1.0), (2.0, 6.0), (6.0, 2.0), (7.0, 7.0)]
    pop = [_ind(a, b) for a, b in objs]
    fast_nondominated_sort(pop)
    assert [p.rank for p in pop] == [0, 0, 1, 1, 2]
    assert [p.rank for p in pop] == _brute_force_ranks(objs)


def test_sort_prefers_feasible():
    pop = [_ind(10.0, 10.0, violation=0.0), _ind(0.0, 0.0, violation=0.5),
           _ind(0.0, 0.0, violation=0.1)]
    fast_nondominated_sort(pop)
    assert pop[0].rank == 0
    assert pop[2].rank == 1
    assert pop[1].rank == 2


def test_crowding_distance_endpoints_infinite():
    pop = [_ind(1.0, 4.0), _ind(2.0, 3.0), _ind(3.0, 2.0), _ind(4.0, 1.0)]
    front = [0, 1, 2, 3]
    crowding_distance(pop, front)
    assert math.isinf(pop[0].crowding) and math.isinf(pop[3].crowding)
    assert pop[1].crowding == pytest.approx(4.0 / 3.0)


def test_operators_respect_bounds():
    rng = np.random.default_rng(0)
    lower, upper = -np.ones(5), np.ones(5)
    for _ in range(200):
        p1 = rng.uniform(-1, 1, 5)
        p2 = rng.uniform(-1, 1, 5)
        c1, c2 = sbx_crossover(p1, p2, lower, upper, rng)
        m = polynomial_mutation(c1, lower, upper, rng, prob=0.5)
        for v in (c1, c2, m):
            assert np.all((v >= -1) & (v <= 1))


def _schaffer_problem():
    def evaluate(x):
        v = float(x[0])
        return np.array([v**2, (v - 2.0) ** 2]), 0.0

    return Problem(n_var=1, lower=np.array([-4.0]), upper=np.array([4.0]),
                   evaluate=evaluate)


def _hypervolume(front, ref=(4.0, 4.0)):
    """Rectangle sweep over the front sorted by the first objective."""
    pts = sorted((f1, f2) for f1, f2 in front if f1 <= ref[0] and f2 <= ref[1])
    hv, prev_f1, floor = 0.0, None, ref[1]
    best = []
    for f1, f2 in pts:
        if not best or f2 < best[-1][1]:
            best.append((f1, f2))
    f1s = [p[0] for p in best] + [ref[0]]
    for i, (f1, f2) in enumerate(best):
        hv += (f1s[i + 1] - f1) * (ref[1] - f2)
    return hv


def test_schaffer_benchmark_hypervolume():
    history = []
    pop = nsga2(_schaffer_problem(), pop_size=80, generations=60, seed=7,
                history=history)
    front = [(p.objectives[0], p.objectives[1]) for p in pop if p.rank == 0]
    xs = np.array([p.x[0] for p in pop if p.rank == 0])
    assert xs.min() >= -0.05 and xs.max() <= 2.05
    assert xs.min() < 0.15 and xs.max() > 1.85   # spans the Pareto set
    hv = _hypervolume(front)
    assert hv >= 0.98 * (40.0 / 3.0)
    # elitist monotonicity of the best first objective
    best = [h["best_rt"] for h in history]
    assert all(b <= a + 1e-12 for a, b in zip(best, best[1:]))


def test_nsga_deterministic():
    a = nsga2(_schaffer_problem(), 20, 10, seed=3)
    b = nsga2(_schaffer_problem(), 20, 10, seed=3)
    for pa, pb in zip(a, b):
        assert np.array_equal(pa.x, pb.x)


def test_nsga_rejects_tiny_population():
    with pytest.raises(DomainError):
        nsga2(_schaffer_problem(), 2, 5, seed=0)


# -- hull problem -------------------------------------------------------------

@pytest.fixture(scope="module")
def surrogates():
    rng = np.random.default_rng(17)
    return (init_mlp(16, (16, 16), 1, "linear", rng),
            init_mlp(14, (16, 16), 1, "linear", rng))


@pytest.fixture(scope="module")
def unit_normalizer():
    """Quantile maps fitted on a broad uniform-box sample of real hulls."""
    from hullforge.dataset import fit_normalizer, sample_random_hull

    rng = np.random.default_rng(5)
    mat = np.array([sample_random_hull(rng).shape for _ in range(256)])
    return fit_normalizer(mat)


def _case_from_hull(hull, volume_scale=1.0, speed=4.0):
    loa = hull.loa
    tstar = 0.5
    vol = measure_at(hull, tstar)[0] * loa**3
    return TestCase("probe", loa, hull.beam_ratio * loa,
                    tstar * hull.depth_ratio * loa, hull.depth_ratio * loa,
                    vol * volume_scale, speed)


def test_individual_at_targets_has_zero_violation(surrogates, unit_normalizer):
    resistance, waterline = surrogates
    hull = make_hull(50.0)
    case = _case_from_hull(hull)
    x_norm = unit_normalizer.normalize(hull.shape)
    objs, violation = evaluate_individual(x_norm, case, resistance, waterline,
                                          unit_normalizer)
    assert violation <= 1e-6
    assert objs.shape == (2,)


def test_beam_three_percent_over_target(surrogates, unit_normalizer):
    resistance, waterline = surrogates
    hull = make_hull(50.0)
    case = _case_from_hull(hull)
    wide = hull.with_shape(beam_ratio=1.03 * hull.beam_ratio)
    x_norm = unit_normalizer.normalize(wide.shape)
    _objs, violation = evaluate_individual(x_norm, case, resistance, waterline,
                                           unit_normalizer)
    # 3% beam excess against a 2% tolerance leaves exactly 1% violation
    # (denormalize(normalize(.)) is identity only up to the quantile grid,
    # so allow its granularity)
    assert violation == pytest.approx(0.01, abs=2e-3)


def test_objectives_match_hand_chain(surrogates, unit_normalizer):
    resistance, waterline = surrogates
    water = WaterConstants()
    hull = make_hull(50.0)
    case = _case_from_hull(hull)
    x_norm = unit_normalizer.normalize(hull.shape)
    objs, _ = evaluate_individual(x_norm, case, resistance, waterline,
                                  unit_normalizer)

    shape = unit_normalizer.denormalize(x_norm)
    tstar = case.draft / (shape[1] * case.loa)
    wl_hat = max(float(waterline.predict(
        np.hstack([x_norm[None, :], [[tstar]]]))[0]), 0.05)
    fn = case.speed / math.sqrt(water.g * wl_hat * case.loa)
    c_t = float(resistance.predict(np.hstack(
        [x_norm[None, :], [[tstar]], [[fn]], [[math.log10(case.loa)]]]))[0])
    r_t = 10.0**c_t * 0.5 * water.rho * case.speed**2 * case.loa**2
    assert objs[1] == pytest.approx(c_t, rel=1e-12)
    assert objs[0] == pytest.approx(r_t, rel=1e-12)


def test_hull_problem_runs_a_few_generations(surrogates, unit_normalizer):
    resistance, waterline = surrogates
    case = _case_from_hull(make_hull(50.0), volume_scale=0.9)
    problem = make_hull_problem(case, resistance, waterline, unit_normalizer)
    history = []
    pop = nsga2(problem, 12, 4, seed=1, history=history)
    assert len(pop) == 12
    assert len(history) == 4
    summary = population_summary(pop, 3)
    assert summary["n_feasible"] >= 0
