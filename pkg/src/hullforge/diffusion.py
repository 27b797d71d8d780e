"""Conditional tabular denoising diffusion with optional guidance.

The denoiser is a plain MLP over [x_t, e] where e is a sinusoidal timestep
embedding summed with a learned linear embedding of the conditioning
vector.  Sampling follows the guided update literally, including the
(1 - gamma) attenuation of the noise term and the classifier gradient
added outside the sigma_t scaling:

    x_{t-1} = (x_t - (1-a_t)/sqrt(1-abar_t) eps_hat) / sqrt(a_t)
              + sigma_t Z (1-gamma) + gamma grad f
              - lambda0 grad P_ct - lambda1 grad (V - P_v)^2

Guidance gradients are evaluated on the normalized parameter scale, and
the volume term lives on the log10 scale where the volume regressor is
trained.  The Froude number fed to the resistance model is recomputed
every step from the waterline regressor via F_n = U / sqrt(g WL LOA).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import TestCase, WaterConstants
from .errors import (ConfigurationError, DomainError, RepresentationError,
                     TrainingError)
from .neural import Adam, MlpModel, TrainConfig, init_mlp, _loss_and_delta

WL_FLOOR = 0.05   # waterline-prediction floor keeps the Froude number finite


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step beta/alpha tables; index with t in [1, T]."""

    betas: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=float)
        object.__setattr__(self, "betas", betas)
        if np.any((betas <= 0) | (betas >= 1)):
            raise DomainError("betas must lie in (0, 1)")
        abar = np.cumprod(1.0 - betas)
        if np.any(np.diff(abar) >= 0):
            raise DomainError("cumulative alpha must be strictly decreasing")
        if abar[-1] >= 0.01:
            raise DomainError(f"terminal cumulative alpha {abar[-1]:.4f} is too "
                              "large; increase T or the beta range")
        object.__setattr__(self, "_alphas", 1.0 - betas)
        object.__setattr__(self, "_abar", abar)
        object.__setattr__(self, "_sigmas", np.sqrt(betas))

    @property
    def timesteps(self) -> int:
        return self.betas.size

    def alpha(self, t: int) -> float:
        return float(self._alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        return float(self._abar[t - 1])

    def sigma(self, t: int) -> float:
        return float(self._sigmas[t - 1])


def linear_schedule(timesteps: int = 1000, beta_start: float = 1e-4,
                    beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule; the stated range is for 1000 steps and is
    rescaled by 1000/T for other step counts so the terminal noise level
    stays comparable."""
    scale = 1000.0 / timesteps
    return NoiseSchedule(np.linspace(scale * beta_start, scale * beta_end,
                                     timesteps))


def forward_noise(x0, t: int, eps, sched: NoiseSchedule):
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    if not 1 <= t <= sched.timesteps:
        raise DomainError(f"timestep {t} outside 1..{sched.timesteps}")
    x0 = np.asarray(x0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if x0.shape != eps.shape:
        raise RepresentationError("noise draw must match the sample shape")
    ab = sched.alpha_bar(t)
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps


@dataclass(frozen=True)
class ConditioningVector:
    """Targets handed to the denoiser: draft ratio, log10 volume, beam, depth.

    Volume is the LOA-normalized displaced volume; beam and depth are the
    LOA ratios, so the vector is scale-free like the design parameters.
    """

    tstar: float
    log_v: float
    beam_ratio: float
    depth_ratio: float

    def __post_init__(self):
        if not 0.01 <= self.tstar <= 1.0:
            raise DomainError("conditioning draft ratio must be in [0.01, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([self.tstar, self.log_v, self.beam_ratio, self.depth_ratio])

    @classmethod
    def from_case(cls, case: TestCase) -> "ConditioningVector":
        return cls(tstar=case.tstar,
                   log_v=math.log10(case.volume / case.loa**3),
                   beam_ratio=case.boa / case.loa,
                   depth_ratio=case.depth / case.loa)


@dataclass
class DenoiserModel:
    """Noise-prediction network with learned conditioning embedding."""

    mlp: MlpModel
    cond_w: np.ndarray       # (embed_dim, cond_dim)
    cond_b: np.ndarray       # (embed_dim,)
    x_dim: int
    cond_dim: int
    embed_dim: int
    timesteps: int

    def time_embedding(self, t) -> np.ndarray:
        """Sinusoidal embedding of integer timesteps, shape (..., embed_dim)."""
        t = np.asarray(t, dtype=float)
        half = self.embed_dim // 2
        freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
        ang = t[..., None] * freqs
        return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)

    def _stack(self, x, t, cond):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cond = np.asarray(cond, dtype=float)
        if cond.ndim == 1:
            cond = np.broadcast_to(cond, (x.shape[0], cond.size))
        emb = self.time_embedding(np.broadcast_to(np.asarray(t, dtype=float),
                                                  (x.shape[0],)))
        emb = emb + cond @ self.cond_w.T + self.cond_b
        return np.concatenate([x, emb], axis=1), cond

    def predict_noise(self, x, t, cond) -> np.ndarray:
        inp, _ = self._stack(x, t, cond)
        return self.mlp.forward(inp)


def init_denoiser(x_dim: int, cond_dim: int, sched: NoiseSchedule,
                  hidden=(256, 256, 256, 256), embed_dim: int = 32,
                  seed: int = 0) -> DenoiserModel:
    if embed_dim % 2:
        raise ConfigurationError("embedding dimension must be even")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 303]))
    mlp = init_mlp(x_dim + embed_dim, hidden, x_dim, "linear", rng)
    scale = 1.0 / math.sqrt(cond_dim)
    cond_w = rng.uniform(-scale, scale, (embed_dim, cond_dim))
    return DenoiserModel(mlp=mlp, cond_w=cond_w, cond_b=np.zeros(embed_dim),
                         x_dim=x_dim, cond_dim=cond_dim, embed_dim=embed_dim,
                         timesteps=sched.timesteps)


def train_denoiser(draw_batch, x_dim: int, cond_dim: int, sched: NoiseSchedule,
                   cfg: TrainConfig, hidden=(256, 256, 256, 256),
                   embed_dim: int = 32) -> DenoiserModel:
    """Generic noise-prediction training.

    ``draw_batch(rng, size)`` returns (x0, cond) arrays.  Each step draws
    fresh timesteps and noise, forms x_t, and descends on the noise MSE;
    gradients flow into the conditioning embedding as well.
    """
    model = init_denoiser(x_dim, cond_dim, sched, hidden, embed_dim, cfg.seed)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 404]))
    params = [*model.mlp.weights, *model.mlp.biases, model.cond_w, model.cond_b]
    opt = Adam(params, lr=cfg.learning_rate)
    abar = sched._abar
    for step in range(cfg.steps):
        x0, cond = draw_batch(rng, cfg.batch_size)
        t = rng.integers(1, sched.timesteps + 1, x0.shape[0])
        eps = rng.standard_normal(x0.shape)
        ab = abar[t - 1][:, None]
        xt = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps

        inp, cond_arr = model._stack(xt, t, cond)
        acts, pre = model.mlp._forward_cached(inp)
        loss, delta = _loss_and_delta(acts[-1], eps, "mse")
        if not np.isfinite(loss):
            raise TrainingError(f"diffusion training diverged at step {step}")
        dws, dbs, dinp = model.mlp._backward(acts, pre, delta)
        demb = dinp[:, model.x_dim:]
        dcond_w = demb.T @ cond_arr
        dcond_b = demb.sum(axis=0)
        opt.step([*dws, *dbs, dcond_w, dcond_b])
    return model


def train_diffusion(data, sched: NoiseSchedule, cfg: TrainConfig,
                    hidden=(256, 256, 256, 256), embed_dim: int = 32) -> DenoiserModel:
    """Train the hull denoiser on a stacked feasible dataset.

    Each batch item pairs a normalized design vector with a conditioning
    vector assembled at a random draft: [t*, log10 V(t*), beam, depth].
    """
    from .dataset import StackedDataset, _interp_marks  # local to avoid an import cycle in docs

    if not isinstance(data, StackedDataset):
        raise RepresentationError("train_diffusion expects a StackedDataset")
    if data.n < 1:
        raise TrainingError("diffusion training needs at least one feasible record")
    beam = data.shapes[:, 0]
    depth = data.shapes[:, 1]

    def draw_batch(rng, size):
        idx = rng.integers(0, data.n, size)
        tstar = rng.uniform(0.01, 1.0, size)
        vol = _interp_marks(data.vols, idx, tstar)
        cond = np.column_stack([tstar, np.log10(vol), beam[idx], depth[idx]])
        return data.norm_shapes[idx], cond

    return train_denoiser(draw_batch, x_dim=data.norm_shapes.shape[1], cond_dim=4,
                          sched=sched, cfg=cfg, hidden=hidden, embed_dim=embed_dim)


@dataclass
class GuidanceModels:
    """Trained models used during sampling; optional ones may be None."""

    denoiser: DenoiserModel
    feasibility: MlpModel | None = None   # logistic feasibility classifier
    resistance: MlpModel | None = None    # [x, t*, F_n, log LOA] -> C_T
    volume: MlpModel | None = None        # [x, t*] -> log10 V
    waterline: MlpModel | None = None     # [x, t*] -> WL


def sample_guided(models: GuidanceModels, cond: ConditioningVector,
                  speed: float, loa: float, n: int, *, gamma: float,
                  lambda0: float, lambda1: float, sched: NoiseSchedule,
                  seed: int, water: WaterConstants | None = None) -> np.ndarray:
    """Reverse diffusion with feasibility / resistance / volume guidance.

    Returns (n, x_dim) raw normalized design vectors; callers denormalize
    and validate.  With all coefficients zero this is exactly unguided
    conditional sampling (and consumes the same random stream, so the
    trajectories agree bitwise).
    """
    if min(gamma, lambda0, lambda1) < 0:
        raise ConfigurationError("guidance coefficients must be >= 0")
    if gamma > 0 and models.feasibility is None:
        raise ConfigurationError("gamma > 0 needs a feasibility classifier")
    if lambda0 > 0 and (models.resistance is None or models.waterline is None):
        raise ConfigurationError("lambda0 > 0 needs resistance and waterline models")
    if lambda1 > 0 and models.volume is None:
        raise ConfigurationError("lambda1 > 0 needs a volume model")
    water = water or WaterConstants()
    den = models.denoiser
    rng = np.random.default_rng(seed)
    if n == 0:
        return np.zeros((0, den.x_dim))

    c = cond.as_array()
    log_loa = math.log10(loa)
    x = rng.standard_normal((n, den.x_dim))
    tcol = np.full((n, 1), cond.tstar)
    for t in range(sched.timesteps, 0, -1):
        z = rng.standard_normal(x.shape) if t > 1 else np.zeros_like(x)
        eps_hat = den.predict_noise(x, t, c)
        a_t = sched.alpha(t)
        ab_t = sched.alpha_bar(t)
        mean = (x - (1.0 - a_t) / math.sqrt(1.0 - ab_t) * eps_hat) / math.sqrt(a_t)
        step = mean + sched.sigma(t) * z * (1.0 - gamma)
        if gamma > 0:
            step += gamma * models.feasibility.input_gradient(x)
        if lambda0 > 0:
            wl_hat = np.maximum(models.waterline.predict(np.hstack([x, tcol])),
                                WL_FLOOR)
            fn = speed / np.sqrt(water.g * wl_hat * loa)
            inp = np.hstack([x, tcol, fn[:, None], np.full((n, 1), log_loa)])
            step -= lambda0 * models.resistance.input_gradient(inp)[:, :den.x_dim]
        if lambda1 > 0:
            inp = np.hstack([x, tcol])
            v_hat = models.volume.predict(inp)
            grad_v = models.volume.input_gradient(inp)[:, :den.x_dim]
            step -= lambda1 * 2.0 * (v_hat - cond.log_v)[:, None] * grad_v
        x = step
    return x


def sample_conditional(models: GuidanceModels, cond: ConditioningVector,
                       n: int, sched: NoiseSchedule, seed: int) -> np.ndarray:
    """Unguided conditional sampling (all guidance coefficients zero)."""
    return sample_guided(models, cond, speed=1.0, loa=1.0, n=n, gamma=0.0,
                         lambda0=0.0, lambda1=0.0, sched=sched, seed=seed)


# ---------------------------------------------------------------------------
# Denoiser archive: conditioning-embedding blocks followed by the MLP blocks.


def save_denoiser(model: DenoiserModel, path) -> None:
    from .neural import save_weights
    import io as _io

    with open(path, "w") as fh:
        fh.write(f"denoiser {model.x_dim} {model.cond_dim} {model.embed_dim} "
                 f"{model.timesteps}\n")
        fh.write(f"CW {model.cond_w.shape[0]} {model.cond_w.shape[1]}\n")
        for row in model.cond_w:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        fh.write(f"cb {model.cond_b.size}\n")
        fh.write(" ".join(repr(float(v)) for v in model.cond_b) + "\n")
        buf = _io.StringIO()
        _dump_mlp(model.mlp, buf)
        fh.write(buf.getvalue())


def _dump_mlp(mlp, fh):
    sizes = " ".join(map(str, mlp.sizes))
    fh.write(f"mlp {sizes} tanh {mlp.head}\n")
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        fh.write(f"W{i} {w.shape[0]} {w.shape[1]}\n")
        for row in w:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        fh.write(f"b{i} {b.size}\n")
        fh.write(" ".join(repr(float(v)) for v in b) + "\n")


def load_denoiser(path) -> DenoiserModel:
    from .neural import MlpModel

    with open(path) as fh:
        header = fh.readline().split()
        if not header or header[0] != "denoiser":
            raise RepresentationError(f"not a denoiser archive: {path}")
        x_dim, cond_dim, embed_dim, timesteps = (int(v) for v in header[1:])
        tag, rows, cols = fh.readline().split()
        if tag != "CW" or (int(rows), int(cols)) != (embed_dim, cond_dim):
            raise RepresentationError("conditioning block has wrong shape")
        cond_w = np.array([[float(v) for v in fh.readline().split()]
                           for _ in range(embed_dim)])
        tag, size = fh.readline().split()
        if tag != "cb" or int(size) != embed_dim:
            raise RepresentationError("conditioning bias block has wrong shape")
        cond_b = np.array([float(v) for v in fh.readline().split()])

        mhead = fh.readline().split()
        sizes = tuple(int(v) for v in mhead[1:-2])
        weights, biases = [], []
        for i in range(len(sizes) - 1):
            _tag, r, c = fh.readline().split()
            w = np.array([[float(v) for v in fh.readline().split()]
                          for _ in range(int(r))])
            fh.readline()
            b = np.array([float(v) for v in fh.readline().split()])
            weights.append(w)
            biases.append(b)
        mlp = MlpModel(sizes=sizes, weights=weights, biases=biases, head=mhead[-1])
    return DenoiserModel(mlp=mlp, cond_w=cond_w, cond_b=cond_b, x_dim=x_dim,
                         cond_dim=cond_dim, embed_dim=embed_dim,
                         timesteps=timesteps)
