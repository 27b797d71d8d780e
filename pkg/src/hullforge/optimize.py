"""NSGA-II with constrained domination, plus the hull design problem.

The genetic machinery is generic over a bi-objective problem (bounds,
evaluate).  The hull problem minimizes surrogate total resistance and its
coefficient at a test case's speed, constrained to the case's beam, depth
and volume targets plus the scheme's algebraic feasibility residuals.
Objectives use the learned surrogates; the volume constraint uses the
exact geometric measure so constraint satisfaction is not itself at the
surrogate's mercy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import TestCase, WaterConstants
from .errors import DomainError, TrainingError
from .geometry import HullParams, measure_at, validate
from .neural import MlpModel

SBX_ETA = 15.0
MUTATION_ETA = 20.0
CROSSOVER_PROB = 0.9


@dataclass
class Individual:
    x: np.ndarray                 # decision vector (normalized shape params)
    objectives: np.ndarray        # (2,) minimized
    violation: float              # total positive constraint excess; 0 = feasible
    rank: int = -1
    crowding: float = 0.0


@dataclass(frozen=True)
class Problem:
    n_var: int
    lower: np.ndarray
    upper: np.ndarray
    evaluate: callable            # x -> (objectives (2,), violation >= 0)


def constrained_dominates(a: Individual, b: Individual) -> bool:
    """Feasible beats infeasible; among infeasible, lower violation wins;
    among feasible, Pareto domination."""
    if a.violation == 0.0 and b.violation > 0.0:
        return True
    if a.violation > 0.0 and b.violation == 0.0:
        return False
    if a.violation > 0.0 and b.violation > 0.0:
        return a.violation < b.violation
    ao, bo = a.objectives, b.objectives
    return bool(np.all(ao <= bo) and np.any(ao < bo))


def fast_nondominated_sort(pop: list) -> list:
    """Assign ranks in place and return the fronts (lists of indices)."""
    n = len(pop)
    dominated = [[] for _ in range(n)]
    counts = [0] * n
    fronts = [[]]
    for p in range(n):
        for q in range(p + 1, n):
            if constrained_dominates(pop[p], pop[q]):
                dominated[p].append(q)
                counts[q] += 1
            elif constrained_dominates(pop[q], pop[p]):
                dominated[q].append(p)
                counts[p] += 1
    for p in range(n):
        if counts[p] == 0:
            pop[p].rank = 0
            fronts[0].append(p)
    i = 0
    while fronts[i]:
        nxt = []
        for p in fronts[i]:
            for q in dominated[p]:
                counts[q] -= 1
                if counts[q] == 0:
                    pop[q].rank = i + 1
                    nxt.append(q)
        i += 1
        fronts.append(nxt)
    fronts.pop()
    return fronts


def crowding_distance(pop: list, front: list) -> None:
    """Per-front crowding distances, written in place."""
    if not front:
        return
    for i in front:
        pop[i].crowding = 0.0
    objs = np.array([pop[i].objectives for i in front])
    for m in range(objs.shape[1]):
        order = np.argsort(objs[:, m], kind="stable")
        lo, hi = objs[order[0], m], objs[order[-1], m]
        pop[front[order[0]]].crowding = math.inf
        pop[front[order[-1]]].crowding = math.inf
        if hi == lo:
            continue
        for k in range(1, len(order) - 1):
            gap = objs[order[k + 1], m] - objs[order[k - 1], m]
            pop[front[order[k]]].crowding += gap / (hi - lo)


def _tournament(pop, rng) -> Individual:
    i, j = rng.integers(0, len(pop), 2)
    a, b = pop[i], pop[j]
    if constrained_dominates(a, b):
        return a
    if constrained_dominates(b, a):
        return b
    if a.rank != b.rank:
        return a if a.rank < b.rank else b
    return a if a.crowding >= b.crowding else b


def sbx_crossover(x1, x2, lower, upper, rng, eta=SBX_ETA, prob=CROSSOVER_PROB):
    """Simulated binary crossover, per-variable, clamped to the box."""
    c1, c2 = x1.copy(), x2.copy()
    if rng.random() > prob:
        return c1, c2
    for i in range(x1.size):
        if rng.random() > 0.5 or x1[i] == x2[i]:
            continue
        u = rng.random()
        beta = (2 * u) ** (1 / (eta + 1)) if u <= 0.5 else (1 / (2 - 2 * u)) ** (1 / (eta + 1))
        a = 0.5 * ((1 + beta) * x1[i] + (1 - beta) * x2[i])
        b = 0.5 * ((1 - beta) * x1[i] + (1 + beta) * x2[i])
        c1[i] = np.clip(a, lower[i], upper[i])
        c2[i] = np.clip(b, lower[i], upper[i])
    return c1, c2


def polynomial_mutation(x, lower, upper, rng, eta=MUTATION_ETA, prob=None):
    """Deb's polynomial mutation with boundary-aware perturbation."""
    y = x.copy()
    if prob is None:
        prob = 1.0 / x.size
    for i in range(x.size):
        if rng.random() > prob:
            continue
        span = upper[i] - lower[i]
        if span <= 0:
            continue
        d1 = (y[i] - lower[i]) / span
        d2 = (upper[i] - y[i]) / span
        u = rng.random()
        mpow = 1.0 / (eta + 1.0)
        if u < 0.5:
            dq = (2 * u + (1 - 2 * u) * (1 - d1) ** (eta + 1)) ** mpow - 1.0
        else:
            dq = 1.0 - (2 * (1 - u) + 2 * (u - 0.5) * (1 - d2) ** (eta + 1)) ** mpow
        y[i] = np.clip(y[i] + dq * span, lower[i], upper[i])
    return y


def _evaluate(problem, x) -> Individual:
    objs, violation = problem.evaluate(x)
    return Individual(x=x, objectives=np.asarray(objs, dtype=float),
                      violation=float(violation))


def _select(pop, size):
    fronts = fast_nondominated_sort(pop)
    for front in fronts:
        crowding_distance(pop, front)
    chosen = []
    for front in fronts:
        if len(chosen) + len(front) <= size:
            chosen.extend(front)
        else:
            rest = sorted(front, key=lambda i: -pop[i].crowding)
            chosen.extend(rest[: size - len(chosen)])
            break
    return [pop[i] for i in chosen]


def nsga2(problem: Problem, pop_size: int, generations: int, seed: int,
          initial: np.ndarray | None = None, history: list | None = None) -> list:
    """Elitist NSGA-II; deterministic for a fixed seed.

    ``initial`` optionally seeds the first population (rows beyond
    pop_size are ignored; missing rows are drawn uniformly in the box).
    ``history`` (if given) collects per-generation summary dicts.
    """
    if pop_size < 4:
        raise DomainError("population must be >= 4")
    rng = np.random.default_rng(seed)
    lower, upper = problem.lower, problem.upper

    genomes = []
    if initial is not None:
        genomes = [np.clip(np.asarray(r, dtype=float), lower, upper)
                   for r in initial[:pop_size]]
    while len(genomes) < pop_size:
        genomes.append(rng.uniform(lower, upper))
    pop = [_evaluate(problem, g) for g in genomes]

    for gen in range(generations):
        fronts = fast_nondominated_sort(pop)
        for front in fronts:
            crowding_distance(pop, front)
        children = []
        while len(children) < pop_size:
            p1, p2 = _tournament(pop, rng), _tournament(pop, rng)
            c1, c2 = sbx_crossover(p1.x, p2.x, lower, upper, rng)
            children.append(polynomial_mutation(c1, lower, upper, rng))
            if len(children) < pop_size:
                children.append(polynomial_mutation(c2, lower, upper, rng))
        pop = _select(pop + [_evaluate(problem, c) for c in children], pop_size)
        if history is not None:
            history.append(population_summary(pop, gen))
    return pop


def population_summary(pop, gen: int) -> dict:
    feas = [p for p in pop if p.violation == 0.0]
    out = {"gen": gen, "n_feasible": len(feas),
           "mean_violation": float(np.mean([p.violation for p in pop]))}
    if feas:
        objs = np.array([p.objectives for p in feas])
        out.update(best_rt=float(objs[:, 0].min()), mean_rt=float(objs[:, 0].mean()),
                   best_ct=float(objs[:, 1].min()), mean_ct=float(objs[:, 1].mean()))
    else:
        out.update(best_rt=math.nan, mean_rt=math.nan, best_ct=math.nan,
                   mean_ct=math.nan)
    return out


# ---------------------------------------------------------------------------
# Hull design problem


def evaluate_individual(x_norm, case: TestCase, resistance: MlpModel,
                        waterline: MlpModel, normalizer,
                        water: WaterConstants | None = None,
                        volume_nz: int = 160, volume_nx: int = 192):
    """Surrogate objectives (R_T, C_T) and total constraint violation.

    The draft is held at the case target, so t* = T / (depth_ratio * LOA)
    varies with the candidate's depth.  Violations: beam outside 2% of
    target, depth outside 1%, exact volume below 99% of target, any
    algebraic feasibility residual, and drafts past the deck.
    """
    water = water or WaterConstants()
    x_norm = np.asarray(x_norm, dtype=float)
    shape = normalizer.denormalize(x_norm)
    params = HullParams(case.loa, shape)
    report = validate(params)
    violation = sum(res for _name, res in report.violations)

    beam = shape[0] * case.loa
    depth = shape[1] * case.loa
    violation += max(0.0, abs(beam - case.boa) / case.boa - 0.02)
    violation += max(0.0, abs(depth - case.depth) / case.depth - 0.01)

    tstar = case.draft / max(depth, 1e-9)
    if tstar > 1.0:
        violation += tstar - 1.0
        tstar = 1.0

    if report.feasible:
        vol = measure_at(params, tstar, nz=volume_nz, nx=volume_nx)[0] * case.loa**3
        violation += max(0.0, 0.99 - vol / case.volume)

    xrow = x_norm[None, :]
    tcol = np.array([[tstar]])
    wl_hat = max(float(waterline.predict(np.hstack([xrow, tcol]))[0]), 0.05)
    fn = case.speed / math.sqrt(water.g * wl_hat * case.loa)
    inp = np.hstack([xrow, tcol, [[fn]], [[math.log10(case.loa)]]])
    c_t = float(resistance.predict(inp)[0])
    r_t = 10.0**c_t * 0.5 * water.rho * case.speed**2 * case.loa**2
    return np.array([r_t, c_t]), violation


def make_hull_problem(case: TestCase, resistance: MlpModel, waterline: MlpModel,
                      normalizer, water: WaterConstants | None = None) -> Problem:
    n_var = normalizer.dim

    def evaluate(x):
        return evaluate_individual(x, case, resistance, waterline, normalizer, water)

    return Problem(n_var=n_var, lower=-np.ones(n_var), upper=np.ones(n_var),
                   evaluate=evaluate)
