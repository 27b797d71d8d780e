"""Dense feed-forward networks with hand-rolled backprop.

Everything runs in float64 numpy.  Hidden layers use tanh (smooth, with a
strictly positive derivative everywhere, so guidance gradients never die);
the output head is linear for regression or logistic for classification.
Training is minibatch Adam, bit-reproducible for a fixed seed and thread
count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import RepresentationError, TrainingError

HEADS = ("linear", "sigmoid")


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class MlpModel:
    """Weights, biases and activation tags for one dense network."""

    sizes: tuple
    weights: list           # weights[i]: (sizes[i], sizes[i+1])
    biases: list            # biases[i]: (sizes[i+1],)
    head: str = "linear"

    def __post_init__(self):
        if self.head not in HEADS:
            raise RepresentationError(f"unknown head {self.head!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (self.sizes[i + 1],):
                raise RepresentationError("weight shapes disagree with layer sizes")

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def _check(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.in_dim:
            raise RepresentationError(
                f"model expects {self.in_dim} inputs, got {x.shape[1]}")
        return x

    def forward(self, x) -> np.ndarray:
        """(n, out_dim) head outputs (probabilities for the sigmoid head)."""
        h = self._check(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.tanh(h)
        return _sigmoid(h) if self.head == "sigmoid" else h

    def predict(self, x) -> np.ndarray:
        """forward() squeezed to a 1-D vector for single-output models."""
        out = self.forward(x)
        return out[:, 0] if self.out_dim == 1 else out

    def _forward_cached(self, x):
        acts = [x]
        pre = []
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = np.tanh(z) if i < last else z
            acts.append(h)
        return acts, pre

    def input_gradient(self, x) -> np.ndarray:
        """Exact reverse-mode d(output)/d(input), rowwise, for scalar heads.

        For the sigmoid head this is the gradient of the probability, not
        of the logit.
        """
        if self.out_dim != 1:
            raise RepresentationError("input_gradient needs a scalar output")
        x = self._check(x)
        acts, pre = self._forward_cached(x)
        delta = np.ones((x.shape[0], 1))
        if self.head == "sigmoid":
            p = _sigmoid(pre[-1])
            delta = delta * p * (1.0 - p)
        for i in range(len(self.weights) - 1, -1, -1):
            delta = delta @ self.weights[i].T
            if i > 0:
                delta = delta * (1.0 - acts[i] ** 2)
        return delta

    def _backward(self, acts, pre, dout):
        dws = [None] * len(self.weights)
        dbs = [None] * len(self.weights)
        delta = dout
        for i in range(len(self.weights) - 1, -1, -1):
            dws[i] = acts[i].T @ delta
            dbs[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (1.0 - acts[i] ** 2)
            else:
                delta = delta @ self.weights[i].T
        return dws, dbs, delta

    def backprop(self, x, dout):
        """Parameter gradients and input gradient for upstream dL/d(head input).

        ``dout`` is dL/dz of the final pre-head layer (the caller folds any
        head nonlinearity and loss derivative in).  Returns (dws, dbs, dx).
        """
        x = self._check(x)
        acts, pre = self._forward_cached(x)
        return self._backward(acts, pre, dout)


def init_mlp(in_dim: int, hidden: tuple, out_dim: int, head: str,
             rng: np.random.Generator) -> MlpModel:
    """Xavier-uniform initialization (suits the tanh hidden layers)."""
    sizes = (in_dim, *hidden, out_dim)
    weights, biases = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (a + b))
        weights.append(rng.uniform(-bound, bound, (a, b)))
        biases.append(np.zeros(b))
    return MlpModel(sizes=sizes, weights=weights, biases=biases, head=head)


@dataclass
class TrainConfig:
    batch_size: int = 256
    steps: int = 20000
    learning_rate: float = 1e-3
    seed: int = 0
    loss: str = "mse"            # "mse" or "bce"

    def __post_init__(self):
        if self.batch_size < 1 or self.steps < 1:
            raise TrainingError("batch size and step count must be >= 1")
        if self.loss not in ("mse", "bce"):
            raise TrainingError(f"unknown loss {self.loss!r}")


@dataclass
class TrainResult:
    model: MlpModel
    final_loss: float
    loss_history: list = field(default_factory=list)


class Adam:
    """Per-parameter adaptive steps; operates on a flat list of arrays."""

    def __init__(self, params, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1t = 1.0 - self.b1**self.t
        b2t = 1.0 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def _loss_and_delta(z, yb, kind):
    """Loss and dL/dz at the pre-head layer, averaged over the batch."""
    n = z.shape[0]
    if kind == "mse":
        resid = z - yb
        loss = float(np.mean(resid**2))
        delta = 2.0 * resid / resid.size
    else:
        p = _sigmoid(z)
        eps = 1e-12
        loss = float(np.mean(-(yb * np.log(p + eps) + (1 - yb) * np.log(1 - p + eps))))
        delta = (p - yb) / n              # BCE through the sigmoid
    return loss, delta


def _train(model: MlpModel, x, y, cfg: TrainConfig, val=None) -> TrainResult:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[0] != y.shape[0] or x.shape[0] < 1:
        raise TrainingError("training arrays must share a positive row count")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam([*model.weights, *model.biases], lr=cfg.learning_rate)
    nw = len(model.weights)
    history = []
    loss = float("nan")
    for step in range(cfg.steps):
        idx = rng.integers(0, x.shape[0], min(cfg.batch_size, x.shape[0]))
        xb, yb = x[idx], y[idx]
        acts, pre = model._forward_cached(xb)
        loss, delta = _loss_and_delta(acts[-1], yb, cfg.loss)
        if not np.isfinite(loss):
            raise TrainingError(f"training loss diverged at step {step}")
        dws, dbs, _ = model._backward(acts, pre, delta)
        opt.step([*dws, *dbs])
        if step % 200 == 0 or step == cfg.steps - 1:
            history.append((step, loss))
    return TrainResult(model=model, final_loss=loss, loss_history=history)


def train_regressor(x, y, cfg: TrainConfig, *, hidden=(256, 256, 256, 256),
                    model: MlpModel | None = None) -> TrainResult:
    """Minibatch Adam on mean-squared error; fresh Xavier net unless given."""
    x = np.asarray(x, dtype=float)
    if model is None:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 101]))
        out_dim = 1 if np.asarray(y).ndim == 1 else np.asarray(y).shape[1]
        model = init_mlp(x.shape[1], hidden, out_dim, "linear", rng)
    cfg = TrainConfig(cfg.batch_size, cfg.steps, cfg.learning_rate, cfg.seed, "mse")
    return _train(model, x, y, cfg)


def train_classifier(x, y, cfg: TrainConfig, *, hidden=(256, 256, 256, 256),
                     model: MlpModel | None = None) -> TrainResult:
    """Binary cross-entropy training of a logistic-output network."""
    y = np.asarray(y, dtype=float)
    classes = np.unique(y)
    if classes.size < 2:
        raise TrainingError("classifier training needs both classes present")
    x = np.asarray(x, dtype=float)
    if model is None:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 202]))
        model = init_mlp(x.shape[1], hidden, 1, "sigmoid", rng)
    cfg = TrainConfig(cfg.batch_size, cfg.steps, cfg.learning_rate, cfg.seed, "bce")
    return _train(model, x, y, cfg)


def r_squared(model: MlpModel, x, y) -> float:
    y = np.asarray(y, dtype=float).ravel()
    pred = model.predict(x)
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - ss_res / ss_tot


def accuracy(model: MlpModel, x, y) -> float:
    pred = model.predict(x) >= 0.5
    return float(np.mean(pred == (np.asarray(y).ravel() >= 0.5)))


# ---------------------------------------------------------------------------
# Portable text weight archive: a header line with the layer sizes and
# activation tags, then one row-major float block per matrix/vector.


def save_weights(model: MlpModel, path) -> None:
    with open(path, "w") as fh:
        sizes = " ".join(map(str, model.sizes))
        fh.write(f"mlp {sizes} tanh {model.head}\n")
        for i, (w, b) in enumerate(zip(model.weights, model.biases)):
            fh.write(f"W{i} {w.shape[0]} {w.shape[1]}\n")
            for row in w:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
            fh.write(f"b{i} {b.size}\n")
            fh.write(" ".join(repr(float(v)) for v in b) + "\n")


def load_weights(path) -> MlpModel:
    with open(path) as fh:
        header = fh.readline().split()
        if not header or header[0] != "mlp":
            raise RepresentationError(f"not a weight archive: {path}")
        head = header[-1]
        if header[-2] != "tanh":
            raise RepresentationError(f"unsupported activation {header[-2]!r}")
        sizes = tuple(int(v) for v in header[1:-2])
        weights, biases = [], []
        for i in range(len(sizes) - 1):
            tag, rows, cols = fh.readline().split()
            rows, cols = int(rows), int(cols)
            if tag != f"W{i}" or (rows, cols) != (sizes[i], sizes[i + 1]):
                raise RepresentationError(f"weight block {tag} has wrong shape")
            w = np.array([[float(v) for v in fh.readline().split()]
                          for _ in range(rows)])
            if w.shape != (rows, cols):
                raise RepresentationError(f"weight block {tag} is malformed")
            tag, size = fh.readline().split()
            if tag != f"b{i}" or int(size) != cols:
                raise RepresentationError(f"bias block {tag} has wrong shape")
            b = np.array([float(v) for v in fh.readline().split()])
            weights.append(w)
            biases.append(b)
    return MlpModel(sizes=sizes, weights=weights, biases=biases, head=head)
