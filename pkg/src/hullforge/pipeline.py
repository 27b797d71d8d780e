"""End-to-end commands: dataset build, training, sampling, optimization,
evaluation.  Each command writes a self-contained artifact directory with a
manifest (config hash, seeds, checksums of every emitted file, no
timestamps), first into a temp path and moved into place on success, so
reruns with identical inputs are byte-identical and interrupted runs leave
nothing half-written.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
import shutil
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig, TestCase, config_hash
from .dataset import (StackedDataset, build_dataset, classifier_rows,
                      fit_normalizer, geometry_rows, load_normalizer,
                      read_dataset_csv, read_meta, resistance_rows,
                      save_normalizer, stack_records, write_dataset_csv,
                      write_meta)
from .diffusion import (ConditioningVector, GuidanceModels, NoiseSchedule,
                        linear_schedule, load_denoiser, sample_guided,
                        save_denoiser, train_diffusion)
from .errors import ConfigurationError, DependencyError
from .evaluate import (TOLERANCE_BANDS, audit_samples, audit_stats, compare,
                       fit_pca2, kde)
from .geometry import HULL_FIELDS, HullParams, hull_to_row
from .neural import (TrainConfig, accuracy, load_weights, r_squared,
                     save_weights, train_classifier, train_regressor)
from .optimize import make_hull_problem, nsga2, population_summary

SAMPLE_MODES = ("full", "classifier-only", "unguided")

MODEL_FILES = {
    "resistance": "resistance.txt",
    "volume": "volume.txt",
    "waterline": "waterline.txt",
    "classifier": "classifier.txt",
    "denoiser": "denoiser.txt",
}


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(directory: Path, cfg: PipelineConfig, command: str,
                    seeds: dict) -> None:
    lines = [f"command = {command}", f"config_hash = {config_hash(cfg)}",
             f"version = {__version__}"]
    for key in sorted(seeds):
        lines.append(f"seed.{key} = {seeds[key]}")
    for path in sorted(directory.rglob("*")):
        if path.is_file() and path.name != "manifest.txt":
            rel = path.relative_to(directory)
            lines.append(f"sha256.{rel} = {_sha256(path)}")
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n")


@contextmanager
def _atomic_dir(target: Path):
    """Stage outputs in <target>.tmp and swap into place on success."""
    target = Path(target)
    tmp = target.with_name(target.name + ".tmp")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if target.exists():
        shutil.rmtree(target)
    os.replace(tmp, target)


@contextmanager
def _lock(out_dir: Path):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigurationError(
            f"output directory {out_dir} is locked by another run "
            f"(remove {lock} if that run is dead)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _require(path: Path, hint: str) -> Path:
    if not Path(path).exists():
        raise DependencyError(f"missing {path}; run `{hint}` first")
    return Path(path)


def _seed_int(*parts) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


# ---------------------------------------------------------------------------
# Commands


def cmd_gen_dataset(cfg: PipelineConfig, out_dir) -> Path:
    out_dir = Path(out_dir)
    target = out_dir / "dataset"
    with _lock(out_dir), _atomic_dir(target) as tmp:
        records = build_dataset(
            cfg.n_hulls, cfg.seed, water=cfg.water, n_theta=cfg.theta_nodes,
            nx=cfg.plane_nx, nz=cfg.plane_nz,
            workers=cfg.workers if cfg.workers > 0 else None)
        normalizer = fit_normalizer(records, min_samples=min(64, cfg.n_hulls))
        write_dataset_csv(records, tmp / "hulls.csv")
        save_normalizer(normalizer, tmp / "normalizer.txt")
        write_meta(tmp / "dataset.meta", {
            "seed": cfg.seed,
            "n_feasible": cfg.n_hulls,
            "n_infeasible": cfg.n_hulls,
            "scheme": "separable-13",
            "rho": cfg.water.rho, "g": cfg.water.g, "nu": cfg.water.nu,
            "theta_nodes": cfg.theta_nodes,
            "plane_nx": cfg.plane_nx, "plane_nz": cfg.plane_nz,
        })
        _write_manifest(tmp, cfg, "gen-dataset", {"dataset": cfg.seed})
    return target


def _load_dataset(out_dir: Path):
    ds_dir = _require(Path(out_dir) / "dataset", "gen-dataset")
    records = read_dataset_csv(_require(ds_dir / "hulls.csv", "gen-dataset"))
    normalizer = load_normalizer(_require(ds_dir / "normalizer.txt", "gen-dataset"))
    return records, normalizer


def _schedule(cfg: PipelineConfig) -> NoiseSchedule:
    return linear_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)


def _split_records(records, holdout_fraction, seed):
    feas = [r for r in records if r.feasible]
    infeas = [r for r in records if not r.feasible]
    rng = np.random.default_rng(_seed_int(seed, 11))
    n_hold = max(1, int(len(feas) * holdout_fraction))
    order = rng.permutation(len(feas))
    hold = {int(i) for i in order[:n_hold]}
    train = [feas[i] for i in range(len(feas)) if i not in hold]
    held = [feas[i] for i in sorted(hold)]
    return train, held, infeas


def cmd_train(cfg: PipelineConfig, out_dir, which: str = "all") -> Path:
    """Train the requested model group: regressors | classifier | diffusion | all."""
    if which not in ("regressors", "classifier", "diffusion", "all"):
        raise ConfigurationError(f"unknown training group {which!r}")
    out_dir = Path(out_dir)
    records, normalizer = _load_dataset(out_dir)
    train_rec, held_rec, infeas = _split_records(records, cfg.holdout_fraction,
                                                 cfg.seed)
    data = stack_records(train_rec, normalizer)
    held = stack_records(held_rec, normalizer)
    target = out_dir / "models"
    prior = {}
    if target.exists():   # keep already-trained groups when retraining one
        for name, fname in MODEL_FILES.items():
            path = target / fname
            if path.exists():
                prior[name] = path.read_text()

    metrics = {}
    t_start = time.time()
    with _lock(out_dir), _atomic_dir(target) as tmp:
        hidden = (cfg.hidden_units,) * cfg.hidden_layers

        def tc(steps, tag):
            return TrainConfig(batch_size=cfg.batch_size, steps=steps,
                               learning_rate=cfg.learning_rate,
                               seed=_seed_int(cfg.seed, tag))

        if which in ("regressors", "all"):
            rng = np.random.default_rng(_seed_int(cfg.seed, 21))
            n_rows = cfg.rows_per_hull * data.n
            x, y = resistance_rows(data, rng, n_rows, cfg.water)
            res = train_regressor(x, y, tc(cfg.resistance_steps, 1), hidden=hidden)
            xv, yv = resistance_rows(held, np.random.default_rng(_seed_int(cfg.seed, 22)),
                                     min(8192, 32 * held.n), cfg.water)
            metrics["resistance_r2"] = r_squared(res.model, xv, yv)
            metrics["resistance_loss"] = res.final_loss
            save_weights(res.model, tmp / MODEL_FILES["resistance"])

            xg, logv, wl = geometry_rows(data, rng, n_rows // 2)
            vres = train_regressor(xg, logv, tc(cfg.volume_steps, 2), hidden=hidden)
            wres = train_regressor(xg, wl, tc(cfg.waterline_steps, 3), hidden=hidden)
            xgv, logvv, wlv = geometry_rows(held, np.random.default_rng(_seed_int(cfg.seed, 23)),
                                            min(8192, 32 * held.n))
            metrics["volume_r2"] = r_squared(vres.model, xgv, logvv)
            metrics["waterline_r2"] = r_squared(wres.model, xgv, wlv)
            save_weights(vres.model, tmp / MODEL_FILES["volume"])
            save_weights(wres.model, tmp / MODEL_FILES["waterline"])

        if which in ("classifier", "all"):
            xc, yc = classifier_rows(train_rec + infeas, normalizer)
            cres = train_classifier(xc, yc, tc(cfg.classifier_steps, 4), hidden=hidden)
            metrics["classifier_loss"] = cres.final_loss
            metrics["classifier_train_accuracy"] = accuracy(cres.model, xc, yc)
            save_weights(cres.model, tmp / MODEL_FILES["classifier"])

        if which in ("diffusion", "all"):
            sched = _schedule(cfg)
            den = train_diffusion(data, sched, tc(cfg.diffusion_steps, 5),
                                  hidden=hidden, embed_dim=cfg.embed_dim)
            save_denoiser(den, tmp / MODEL_FILES["denoiser"])

        for name, text in prior.items():   # carry over untouched groups
            path = tmp / MODEL_FILES[name]
            if not path.exists():
                path.write_text(text)

        metrics["train_seconds"] = round(time.time() - t_start, 1)
        write_meta(tmp / "metrics.meta", metrics)
        _write_manifest(tmp, cfg, f"train:{which}", {"master": cfg.seed})
    return target


def _load_models(out_dir: Path, *, need=("resistance", "volume", "waterline",
                                         "classifier", "denoiser")) -> GuidanceModels:
    mdir = _require(Path(out_dir) / "models", "train")
    loaded = {}
    for name in need:
        path = _require(mdir / MODEL_FILES[name], f"train --which {name}")
        loaded[name] = load_denoiser(path) if name == "denoiser" else load_weights(path)
    return GuidanceModels(
        denoiser=loaded.get("denoiser"),
        feasibility=loaded.get("classifier"),
        resistance=loaded.get("resistance"),
        volume=loaded.get("volume"),
        waterline=loaded.get("waterline"),
    )


def _mode_coefficients(cfg: PipelineConfig, mode: str):
    if mode == "full":
        return cfg.gamma, cfg.lambda0, cfg.lambda1
    if mode == "classifier-only":
        return cfg.gamma, 0.0, 0.0
    if mode == "unguided":
        return 0.0, 0.0, 0.0
    raise ConfigurationError(f"unknown sampling mode {mode!r}; "
                             f"expected one of {SAMPLE_MODES}")


def _case(cfg: PipelineConfig, name: str) -> TestCase:
    if name not in cfg.cases:
        raise ConfigurationError(f"unknown test case {name!r}; "
                                 f"bundled: {sorted(cfg.cases)}")
    return cfg.cases[name]


def cmd_sample(cfg: PipelineConfig, out_dir, case_name: str, mode: str = "full",
               n: int | None = None, seed: int | None = None) -> Path:
    case = _case(cfg, case_name)
    gamma, lam0, lam1 = _mode_coefficients(cfg, mode)
    out_dir = Path(out_dir)
    _records, normalizer = _load_dataset(out_dir)
    models = _load_models(out_dir)
    n = cfg.n_samples if n is None else n
    seed = _seed_int(cfg.seed, 31, sorted(cfg.cases).index(case_name),
                     SAMPLE_MODES.index(mode)) if seed is None else seed

    cond = ConditioningVector.from_case(case)
    sched = _schedule(cfg)
    vectors = sample_guided(models, cond, case.speed, case.loa, n, gamma=gamma,
                            lambda0=lam0, lambda1=lam1, sched=sched, seed=seed,
                            water=cfg.water)
    shapes = normalizer.denormalize(vectors)

    target = out_dir / "samples" / case_name / mode
    mdir = out_dir / "models"
    with _lock(out_dir), _atomic_dir(target) as tmp:
        hulls = [HullParams(case.loa, s) for s in shapes]
        _write_csv(tmp / "hulls.csv", HULL_FIELDS,
                   [hull_to_row(h) for h in hulls])
        write_meta(tmp / "provenance.meta", {
            "case": case_name, "mode": mode, "n": n, "seed": seed,
            "gamma": gamma, "lambda0": lam0, "lambda1": lam1,
            "cond_tstar": cond.tstar, "cond_log_v": cond.log_v,
            "cond_beam_ratio": cond.beam_ratio, "cond_depth_ratio": cond.depth_ratio,
            **{f"model_sha256_{k}": _sha256(mdir / v)
               for k, v in MODEL_FILES.items()},
        })
        _write_manifest(tmp, cfg, f"sample:{case_name}:{mode}", {"sample": seed})
    return target


def cmd_optimize(cfg: PipelineConfig, out_dir, case_name: str,
                 seed: int | None = None) -> Path:
    case = _case(cfg, case_name)
    out_dir = Path(out_dir)
    records, normalizer = _load_dataset(out_dir)
    models = _load_models(out_dir, need=("resistance", "waterline"))
    seed = _seed_int(cfg.seed, 41, sorted(cfg.cases).index(case_name)) \
        if seed is None else seed

    feas = [r.params.shape for r in records if r.feasible]
    if len(feas) < cfg.population:
        raise DependencyError(
            f"dataset has {len(feas)} feasible hulls; population needs "
            f"{cfg.population}")
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(feas), cfg.population, replace=False)
    initial = normalizer.normalize(np.array([feas[i] for i in pick]))

    problem = make_hull_problem(case, models.resistance, models.waterline,
                                normalizer, cfg.water)
    history = []
    pop = nsga2(problem, cfg.population, cfg.generations, _seed_int(seed, 1),
                initial=initial, history=history)

    target = out_dir / "optimize" / case_name
    with _lock(out_dir), _atomic_dir(target) as tmp:
        _write_csv(tmp / "history.csv",
                   ("gen", "n_feasible", "best_rt", "mean_rt", "best_ct",
                    "mean_ct", "mean_violation"),
                   [(h["gen"], h["n_feasible"], h["best_rt"], h["mean_rt"],
                     h["best_ct"], h["mean_ct"], h["mean_violation"])
                    for h in history])
        rows = []
        for ind in pop:
            shape = normalizer.denormalize(ind.x)
            rows.append(hull_to_row(HullParams(case.loa, shape))
                        + [float(ind.objectives[0]), float(ind.objectives[1]),
                           float(ind.violation)])
        _write_csv(tmp / "population.csv",
                   HULL_FIELDS + ("pred_rt", "pred_ct", "violation"), rows)
        write_meta(tmp / "optimize.meta", {
            "case": case_name, "seed": seed, "population": cfg.population,
            "generations": cfg.generations,
        })
        _write_manifest(tmp, cfg, f"optimize:{case_name}", {"nsga": seed})
    return target


def _read_sample_vectors(out_dir: Path, case_name: str, mode: str, normalizer):
    path = _require(Path(out_dir) / "samples" / case_name / mode / "hulls.csv",
                    f"sample --case {case_name} --mode {mode}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        shapes = np.array([[float(v) for v in row[1:]] for row in reader])
    return normalizer.normalize(shapes)


def _read_population_vectors(out_dir: Path, case_name: str, normalizer):
    path = _require(Path(out_dir) / "optimize" / case_name / "population.csv",
                    f"optimize --case {case_name}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [row for row in reader]
    shapes = np.array([[float(v) for v in row[1:1 + 13]] for row in rows])
    preds = np.array([float(row[-3]) for row in rows])
    violations = np.array([float(row[-1]) for row in rows])
    return normalizer.normalize(shapes), preds, violations


def _pearson(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or a.std() == 0 or b.std() == 0:
        return math.nan
    return float(np.corrcoef(a, b)[0, 1])


def cmd_evaluate(cfg: PipelineConfig, out_dir, case_name: str) -> Path:
    case = _case(cfg, case_name)
    out_dir = Path(out_dir)
    records, normalizer = _load_dataset(out_dir)
    models = _load_models(out_dir, need=("resistance", "waterline"))

    arms = {}
    for mode in SAMPLE_MODES:
        vectors = _read_sample_vectors(out_dir, case_name, mode, normalizer)
        arms[mode] = audit_samples(vectors, case, models.resistance,
                                   models.waterline, normalizer, cfg.water,
                                   n_theta=cfg.theta_nodes, plane_nx=cfg.plane_nx,
                                   plane_nz=cfg.plane_nz)
    nsga_vec, nsga_pred, nsga_viol = _read_population_vectors(out_dir, case_name,
                                                              normalizer)
    nsga_audits = audit_samples(nsga_vec, case, models.resistance,
                                models.waterline, normalizer, cfg.water,
                                n_theta=cfg.theta_nodes, plane_nx=cfg.plane_nx,
                                plane_nz=cfg.plane_nz)

    target = out_dir / "evaluate" / case_name
    with _lock(out_dir), _atomic_dir(target) as tmp:
        audit_header = ("feasible", "vol_err", "beam_err", "depth_err",
                        "surrogate_rt", "simulated_rt")

        def audit_rows(audits):
            for a in audits:
                if a.feasible:
                    yield (1, a.vol_err, a.beam_err, a.depth_err,
                           a.surrogate_rt, a.simulated_rt)
                else:
                    yield (0, "", "", "", "", "")

        summary_rows = []
        for mode, audits in {**arms, "nsga2": nsga_audits}.items():
            _write_csv(tmp / f"audit_{mode}.csv", audit_header, audit_rows(audits))
            stats = audit_stats(audits)
            summary_rows.append((mode, stats["n"], stats["feasibility_rate"],
                                 stats["vol_err_mean"], stats["vol_err_std"],
                                 stats["beam_err_mean"], stats["beam_err_std"],
                                 stats["depth_err_mean"], stats["depth_err_std"],
                                 stats["volume_in_band"]))
            feas = [a for a in audits if a.feasible]
            if len(feas) >= 2:
                grid, density = kde([a.simulated_rt for a in feas])
                _write_csv(tmp / f"kde_{mode}.csv", ("rt", "density"),
                           zip(grid.tolist(), density.tolist()))
        _write_csv(tmp / "summary.csv",
                   ("arm", "n", "feasibility_rate", "vol_err_mean", "vol_err_std",
                    "beam_err_mean", "beam_err_std", "depth_err_mean",
                    "depth_err_std", "volume_in_band_5pct"), summary_rows)

        comparison_rows = []
        for mode in SAMPLE_MODES:
            report = compare(arms[mode], nsga_audits)
            comparison_rows.append(
                (mode, report.nsga_min_rt,
                 *[report.counts[t] for t in TOLERANCE_BANDS],
                 report.sample_min_rt if report.sample_min_rt is not None else "",
                 report.delta_rt if report.delta_rt is not None else ""))
        _write_csv(tmp / "comparison.csv",
                   ("arm", "nsga_min_rt", "n_low_rt_1pct", "n_low_rt_5pct",
                    "n_low_rt_10pct", "sample_min_rt_5pct", "delta_rt"),
                   comparison_rows)

        # diversity view: PCA frame fitted on the training hulls only
        train_norm = normalizer.normalize(
            np.array([r.params.shape for r in records if r.feasible]))
        pca = fit_pca2(train_norm)
        pca_rows = []
        for group, mat in (("dataset", train_norm),
                           *((m, _read_sample_vectors(out_dir, case_name, m,
                                                      normalizer))
                             for m in SAMPLE_MODES),
                           ("nsga2", nsga_vec)):
            for p in pca.project(mat):
                pca_rows.append((group, float(p[0]), float(p[1])))
        _write_csv(tmp / "pca.csv", ("group", "pc1", "pc2"), pca_rows)

        # surrogate-exploitation observables
        ratios = {}
        feas_idx = [i for i, a in enumerate(nsga_audits) if a.feasible]
        if feas_idx:
            best = min(feas_idx, key=lambda i: nsga_audits[i].simulated_rt)
            a = nsga_audits[best]
            ratios["nsga_best_sim_over_surrogate"] = a.simulated_rt / a.surrogate_rt
        for mode, audits in arms.items():
            feas = [a for a in audits if a.feasible]
            ratios[f"corr_{mode}"] = _pearson([a.surrogate_rt for a in feas],
                                              [a.simulated_rt for a in feas])
        write_meta(tmp / "exploitation.meta", ratios)
        _write_manifest(tmp, cfg, f"evaluate:{case_name}", {})
    return target


def cmd_run_all(cfg: PipelineConfig, out_dir) -> list:
    """Dataset, training, then samples + optimization + evaluation per case."""
    out_dir = Path(out_dir)
    produced = [cmd_gen_dataset(cfg, out_dir), cmd_train(cfg, out_dir, "all")]
    for case_name in sorted(cfg.cases):
        for mode in SAMPLE_MODES:
            produced.append(cmd_sample(cfg, out_dir, case_name, mode))
        produced.append(cmd_optimize(cfg, out_dir, case_name))
        produced.append(cmd_evaluate(cfg, out_dir, case_name))
    return produced
