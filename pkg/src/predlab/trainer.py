"""Training loop for the mixture models: z-scoring, batch perturbation,
Adam updates and validation-based early stopping."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .mixmodel import ConditionalMixtureModel, MarginalMixtureModel

STD_FLOOR = 1e-12


class TrainingDiverged(RuntimeError):
    """Raised when a loss becomes non-finite; aborts one repetition only."""


@dataclass
class TrainConfig:
    epochs: int = 1500
    patience: int = 300
    batch_size: int = 128
    learning_rate: float = 1e-3
    kernel_count: int = 600
    hidden_dim: int = 16
    layer_count: int = 4
    dropout_rate: float = 0.1
    perturb: bool = True
    val_fraction: float = 0.2
    repetitions: int = 10
    seed: int = 0
    precision: str = "float32"

    def __post_init__(self):
        for name in ("epochs", "patience", "batch_size", "kernel_count", "hidden_dim", "layer_count", "repetitions"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be 'float32' or 'float64'")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class Normalizer:
    means: np.ndarray
    stds: np.ndarray

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Z = (X - self.means) / self.stds
        flat = self.stds <= STD_FLOOR
        if np.any(flat):
            Z[..., flat] = 0.0
        return Z

    def invert(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.stds + self.means

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}


def zscore_fit(X) -> Normalizer:
    """Per-column mean and population std (floored at 1e-12)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ValueError("need at least two rows to standardize")
    mean = X.mean(axis=0)
    # second pass removes the rounding left in the first mean (matters when |mean| >> std)
    mean = mean + (X - mean).mean(axis=0)
    return Normalizer(mean, np.maximum(X.std(axis=0), STD_FLOOR))


def zscore_apply(norm: Normalizer, X) -> np.ndarray:
    return norm.apply(X)


def perturb_batch(y, z, sigma_y: float, b: int, rng):
    """Additive N(0, 1) perturbation with bandwidth b^(-1/5) (times sigma_y for y)."""
    y = np.asarray(y, dtype=float)
    h = float(b) ** -0.2
    y_t = y + sigma_y * h * rng.standard_normal(y.shape)
    if z is None:
        return y_t, None
    z = np.asarray(z, dtype=float)
    return y_t, z + h * rng.standard_normal(z.shape)


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params: list, grads: list, state: AdamState, learning_rate: float):
    """One bias-corrected Adam update, applied in place; returns (params, state)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter / gradient count mismatch")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    step = learning_rate * math.sqrt(c2) / c1
    eps = state.eps * math.sqrt(c2)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= step * m / (np.sqrt(v) + eps)
    return params, state


@dataclass
class TrainTrace:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = math.inf
    best_train_eval: float = math.nan
    val_index: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def epochs_run(self) -> int:
        return len(self.val_loss)

    def summary(self) -> dict:
        return {
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "best_train_loss": self.train_loss[self.best_epoch] if self.best_epoch >= 0 else None,
            "best_train_eval": self.best_train_eval,
        }


def split_indices(n: int, val_fraction: float, rng):
    """Random (train, validation) index split; validation gets round(n * fraction) rows."""
    n_val = int(round(n * val_fraction))
    n_val = min(max(n_val, 1), n - 1)
    perm = rng.permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def optimize(params: list, batch_step: Callable, val_loss: Callable, n_train: int,
             cfg: TrainConfig, rng) -> tuple:
    """Mini-batch Adam with early stopping on `val_loss`.

    `batch_step(params, idx, rng)` returns (loss, grads) on training rows `idx`;
    `val_loss(params)` scores the current parameters. Returns the parameters of
    the best validation epoch and the trace.
    """
    params = [np.array(p, dtype=float) for p in params]
    state = AdamState.zeros_like(params)
    trace = TrainTrace()
    best = [p.copy() for p in params]
    n_batches = max(1, math.ceil(n_train / cfg.batch_size))
    wait = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n_train)
        total = 0.0
        for idx in np.array_split(perm, n_batches):
            loss, grads = batch_step(params, idx, rng)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite training loss at epoch {epoch}")
            adam_step(params, grads, state, cfg.learning_rate)
            total += loss * idx.size
        trace.train_loss.append(total / n_train)
        v = float(val_loss(params))
        if not math.isfinite(v):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        trace.val_loss.append(v)
        if v < trace.best_val_loss:
            trace.best_val_loss = v
            trace.best_epoch = epoch
            best = [p.copy() for p in params]
            wait = 0
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    return best, trace


def _min_rows(n):
    if n < 10:
        raise ValueError(f"need at least 10 rows, got {n}")


def fit_marginal(y, cfg: TrainConfig, rng, split=None):
    """Fit q(y) by minimizing the (optionally perturbed) batch NLL."""
    y = np.asarray(y, dtype=float).reshape(-1)
    _min_rows(y.size)
    train_idx, val_idx = split if split is not None else split_indices(y.size, cfg.val_fraction, rng)
    y_tr, y_val = y[train_idx], y[val_idx]
    model = MarginalMixtureModel.initialize(y_tr, cfg.kernel_count, rng)
    sigma_y = float(y_tr.std())

    def batch_step(params, idx, rng):
        yb = y_tr[idx]
        if cfg.perturb:
            yb, _ = perturb_batch(yb, None, sigma_y, idx.size, rng)
        return model.with_parameters(params).loss_and_gradients(yb)

    def val_loss(params):
        return -model.with_parameters(params).log_density(y_val).mean()

    best, trace = optimize(model.parameters(), batch_step, val_loss, y_tr.size, cfg, rng)
    fitted = model.with_parameters(best)
    trace.best_train_eval = float(-fitted.log_density(y_tr).mean())
    trace.val_index = val_idx
    return fitted, trace


def fit_conditional(X, y, cfg: TrainConfig, rng, split=None):
    """Fit q(y|x) on already-normalized features X."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.size:
        raise ValueError("length mismatch between features and targets")
    _min_rows(y.size)
    train_idx, val_idx = split if split is not None else split_indices(y.size, cfg.val_fraction, rng)
    X_tr, y_tr = X[train_idx], y[train_idx]
    X_val, y_val = X[val_idx], y[val_idx]
    model = ConditionalMixtureModel.initialize(
        X.shape[1], cfg.hidden_dim, cfg.layer_count, cfg.kernel_count, rng, y=y_tr,
        dropout_rate=cfg.dropout_rate)
    sigma_y = float(y_tr.std())
    # steps and validation run at cfg.precision; Adam state and the result stay float64
    dt = np.dtype(cfg.precision)
    X_val_c, y_val_c = X_val.astype(dt), y_val.astype(dt)

    def batch_step(params, idx, rng):
        yb, zb = y_tr[idx], X_tr[idx]
        if cfg.perturb:
            yb, zb = perturb_batch(yb, zb, sigma_y, idx.size, rng)
        m = model.with_parameters([p.astype(dt, copy=False) for p in params])
        return m.loss_and_gradients(zb.astype(dt), yb.astype(dt), m.draw_masks(idx.size, rng, dt))

    def val_loss(params):
        m = model.with_parameters([p.astype(dt, copy=False) for p in params])
        return -float(m.log_density(X_val_c, y_val_c).mean(dtype=np.float64))

    best, trace = optimize(model.parameters(), batch_step, val_loss, y_tr.size, cfg, rng)
    fitted = model.with_parameters(best)
    trace.best_train_eval = float(-fitted.log_density(X_tr, y_tr).mean())
    trace.val_index = val_idx
    return fitted, trace
