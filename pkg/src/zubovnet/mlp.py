"""Feedforward tanh network with a linear scalar output, trained by Adam on MSE.

Parameters are plain numpy arrays.  ``W[k]`` has shape (out, in), so a layer
maps a row batch ``H`` to ``tanh(H @ W[k].T + b[k])``.  Inputs are
standardized with per-coordinate constants that travel with the parameters.
"""

import math
from dataclasses import dataclass, field

import numpy as np

MODEL_MAGIC = "zubovnet-mlp"
MODEL_VERSION = 1


class TrainingDivergedError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class MLPArchitecture:
    input_dim: int
    hidden_widths: tuple

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1:
            raise ValueError("input_dim must be at least 1")
        if not self.hidden_widths or min(self.hidden_widths) < 1:
            raise ValueError("need at least one hidden layer, all widths >= 1")

    @property
    def layer_sizes(self):
        return (self.input_dim, *self.hidden_widths, 1)

    @property
    def shapes(self):
        s = self.layer_sizes
        return [(s[k + 1], s[k]) for k in range(len(s) - 1)]

    @property
    def n_values(self):
        return sum(o * i + o for o, i in self.shapes)


@dataclass
class MLPParams:
    arch: MLPArchitecture
    W: list
    b: list
    x_mean: np.ndarray = None
    x_scale: np.ndarray = None

    def __post_init__(self):
        n = self.arch.input_dim
        self.x_mean = np.zeros(n) if self.x_mean is None else np.asarray(self.x_mean, float)
        self.x_scale = np.ones(n) if self.x_scale is None else np.asarray(self.x_scale, float)
        shapes = self.arch.shapes
        if len(self.W) != len(shapes) or len(self.b) != len(shapes):
            raise ValueError(f"expected {len(shapes)} layers")
        for k, (o, i) in enumerate(shapes):
            if self.W[k].shape != (o, i) or self.b[k].shape != (o,):
                raise ValueError(f"layer {k}: expected W {(o, i)} and b {(o,)}")
        if self.x_mean.shape != (n,) or self.x_scale.shape != (n,) or np.any(self.x_scale <= 0):
            raise ValueError("normalization needs input_dim entries and positive scales")

    def copy(self):
        return MLPParams(self.arch, [w.copy() for w in self.W], [b.copy() for b in self.b],
                         self.x_mean.copy(), self.x_scale.copy())

    def flat(self):
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.W, self.b)])

    def with_flat(self, theta):
        """Same architecture and normalization, weights and biases from ``theta``."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.arch.n_values,):
            raise ValueError(f"need {self.arch.n_values} values, got {theta.size}")
        W, b, at = [], [], 0
        for o, i in self.arch.shapes:
            W.append(theta[at:at + o * i].reshape(o, i).copy())
            at += o * i
            b.append(theta[at:at + o].copy())
            at += o
        return MLPParams(self.arch, W, b, self.x_mean.copy(), self.x_scale.copy())


def init_params(arch, seed):
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    W = []
    for o, i in arch.shapes:
        lim = math.sqrt(6.0 / (i + o))
        W.append(rng.uniform(-lim, lim, size=(o, i)))
    return MLPParams(arch, W, [np.zeros(o) for o, _ in arch.shapes])


def _xy(batch):
    """(X, y) from a Dataset, an (X, y) pair or a list of DataPoint."""
    if hasattr(batch, "X") and hasattr(batch, "v"):
        return batch.X, batch.v
    if isinstance(batch, tuple) and len(batch) == 2:
        return np.atleast_2d(np.asarray(batch[0], float)), np.asarray(batch[1], float).ravel()
    batch = list(batch)
    return np.array([p.x for p in batch], dtype=float), np.array([p.v for p in batch], float)


def _check_inputs(p, X):
    if X.ndim != 2 or X.shape[1] != p.arch.input_dim:
        raise ValueError(f"inputs must have {p.arch.input_dim} columns, got shape {X.shape}")


def predict(p, X):
    X = np.asarray(X, dtype=float)
    X2 = np.atleast_2d(X)
    _check_inputs(p, X2)
    H = (X2 - p.x_mean) / p.x_scale
    for w, b in zip(p.W[:-1], p.b[:-1]):
        H = np.tanh(H @ w.T + b)
    return H @ p.W[-1][0] + p.b[-1][0]


def forward(p, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (p.arch.input_dim,):
        raise ValueError(f"x must have length {p.arch.input_dim}, got shape {x.shape}")
    return float(predict(p, x[None, :])[0])


def mse_loss(p, batch):
    X, y = _xy(batch)
    if y.size == 0:
        raise ValueError("empty batch")
    r = predict(p, X) - y
    return float(np.mean(r * r))


def _loss_and_grad(p, X, y):
    H = (X - p.x_mean) / p.x_scale
    acts = [H]
    for w, b in zip(p.W[:-1], p.b[:-1]):
        H = np.tanh(H @ w.T + b)
        acts.append(H)
    out = H @ p.W[-1][0] + p.b[-1][0]
    r = out - y
    n = y.size
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.mean(r * r))
    delta = (2.0 / n) * r[:, None]
    gW = [None] * len(p.W)
    gb = [None] * len(p.b)
    for k in range(len(p.W) - 1, -1, -1):
        gW[k] = delta.T @ acts[k]
        gb[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ p.W[k]) * (1.0 - acts[k] ** 2)
    return loss, gW, gb


def gradient(p, batch):
    """Exact gradient of ``mse_loss`` as (dW list, db list)."""
    X, y = _xy(batch)
    if y.size == 0:
        raise ValueError("empty batch")
    _check_inputs(p, X)
    _, gW, gb = _loss_and_grad(p, X, y)
    return gW, gb


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 200
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    standardize: bool = True
    lr_decay: float = 1.0  # multiplicative, applied after every epoch

    def __post_init__(self):
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be at least 1")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_rmse: list = field(default_factory=list)
    best_epoch: int = -1

    @property
    def best_val_rmse(self):
        return self.val_rmse[self.best_epoch] if self.val_rmse else math.nan


def standardization(X):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


def train(p0, train_set, val_set, cfg=TrainConfig(), callback=None):
    """Mini-batch Adam; returns the epoch with the lowest validation RMSE.

    With ``cfg.standardize`` the input normalization is recomputed from the
    training inputs and stored in the returned parameters.
    """
    X, y = _xy(train_set)
    Xv, yv = _xy(val_set)
    _check_inputs(p0, X)
    _check_inputs(p0, Xv)
    if y.size == 0 or yv.size == 0:
        raise ValueError("training and validation sets must be nonempty")
    p = p0.copy()
    if cfg.standardize:
        p.x_mean, p.x_scale = standardization(X)
    theta = [a for pair in zip(p.W, p.b) for a in pair]
    m = [np.zeros_like(a) for a in theta]
    v = [np.zeros_like(a) for a in theta]
    rng = np.random.default_rng(cfg.seed)
    hist = TrainHistory()
    best = p.copy()
    best_rmse = math.inf
    step = 0
    n = y.size
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, gW, gb = _loss_and_grad(p, X[idx], y[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {epoch}, step {step}; "
                    f"try a smaller learning_rate than {cfg.learning_rate:g}")
            total += loss * idx.size
            step += 1
            c1 = 1.0 - cfg.beta1 ** step
            c2 = 1.0 - cfg.beta2 ** step
            grads = [a for pair in zip(gW, gb) for a in pair]
            for a, g, mk, vk in zip(theta, grads, m, v):
                mk *= cfg.beta1
                mk += (1.0 - cfg.beta1) * g
                vk *= cfg.beta2
                vk += (1.0 - cfg.beta2) * g * g
                a -= lr * (mk / c1) / (np.sqrt(vk / c2) + cfg.eps)
        r = predict(p, Xv) - yv
        rmse = float(np.sqrt(np.mean(r * r)))
        if not math.isfinite(rmse):
            raise TrainingDivergedError(
                f"non-finite validation error at epoch {epoch}; "
                f"try a smaller learning_rate than {cfg.learning_rate:g}")
        lr *= cfg.lr_decay
        hist.train_loss.append(total / n)
        hist.val_rmse.append(rmse)
        if rmse < best_rmse:
            best_rmse = rmse
            best = p.copy()
            hist.best_epoch = epoch
        if callback is not None:
            callback(epoch, total / n, rmse)
    return best, hist


@dataclass(frozen=True)
class ErrorStats:
    rmse: float
    p25: float
    p75: float
    max_abs_error: float
    hist_counts: np.ndarray
    hist_edges: np.ndarray

    def summary(self):
        return (f"RMSE = {self.rmse:.3e}; 25th/75th percentile of V - V_NN = "
                f"{self.p25:.3g} / {self.p75:.3g}; max |error| = {self.max_abs_error:.4g}")


def validate(p, val_set, bins=50):
    """Statistics of the signed error V(x) - V_NN(x) over a validation set."""
    X, y = _xy(val_set)
    if y.size == 0:
        raise ValueError("validation set is empty")
    err = y - predict(p, X)
    p25, p75 = np.percentile(err, [25, 75])
    lim = float(np.max(np.abs(err)))
    counts, edges = np.histogram(err, bins=bins, range=(-lim, lim) if lim > 0 else (-1e-12, 1e-12))
    return ErrorStats(float(np.sqrt(np.mean(err * err))), float(p25), float(p75), lim,
                      counts, edges)


# ---------------------------------------------------------------- model files


def _fmt(values):
    return " ".join(format(float(v), ".17g") for v in values)


def save_model(p, path):
    """Text model file; parameters in layer order, each W row-major then b."""
    theta = p.flat()
    with open(path, "w") as fh:
        fh.write(f"{MODEL_MAGIC} {MODEL_VERSION}\n")
        fh.write(f"input_dim {p.arch.input_dim}\n")
        fh.write("hidden " + " ".join(str(w) for w in p.arch.hidden_widths) + "\n")
        fh.write("x_mean " + _fmt(p.x_mean) + "\n")
        fh.write("x_scale " + _fmt(p.x_scale) + "\n")
        fh.write(f"values {theta.size}\n")
        for t in theta:
            fh.write(format(float(t), ".17g") + "\n")
        fh.write("end\n")


def load_model(path):
    with open(path) as fh:
        lines = fh.read().split("\n")

    def field_(i, key):
        if i >= len(lines):
            raise ModelFormatError(f"{path}: truncated before '{key}' (line {i + 1})")
        parts = lines[i].split()
        if not parts or parts[0] != key:
            raise ModelFormatError(f"{path}: line {i + 1}: expected '{key} ...'")
        return parts[1:]

    version = field_(0, MODEL_MAGIC)
    if version != [str(MODEL_VERSION)]:
        raise ModelFormatError(f"{path}: unsupported model version {' '.join(version)}")
    try:
        arch = MLPArchitecture(int(field_(1, "input_dim")[0]),
                               tuple(int(w) for w in field_(2, "hidden")))
        x_mean = np.array([float(v) for v in field_(3, "x_mean")])
        x_scale = np.array([float(v) for v in field_(4, "x_scale")])
        n = int(field_(5, "values")[0])
    except (IndexError, ValueError) as exc:
        raise ModelFormatError(f"{path}: bad header ({exc})") from None
    if n != arch.n_values:
        raise ModelFormatError(f"{path}: architecture needs {arch.n_values} values, header says {n}")
    body = lines[6:6 + n]
    if len(body) < n or len(lines) < 7 + n or lines[6 + n].strip() != "end":
        raise ModelFormatError(f"{path}: truncated parameter block (expected {n} values + 'end')")
    try:
        theta = np.array([float(t) for t in body])
    except ValueError as exc:
        raise ModelFormatError(f"{path}: bad parameter value ({exc})") from None
    if not np.all(np.isfinite(theta)):
        raise ModelFormatError(f"{path}: non-finite parameter")
    try:
        base = MLPParams(arch, [np.zeros(s) for s in arch.shapes],
                         [np.zeros(s[0]) for s in arch.shapes], x_mean, x_scale)
    except ValueError as exc:
        raise ModelFormatError(f"{path}: {exc}") from None
    return base.with_flat(theta)
