"""Gaussian mixture densities: marginal q(y) and network-conditioned q(y|x).

Both model families share one vectorized kernel (`_mixture_terms`) that
evaluates per-sample log densities with the log-sum-exp rearrangement and
returns analytic gradients with respect to the raw (unconstrained) mixture
parameters: weight logits, means and pre-softplus scales.
"""
from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)
SCALE_FLOOR = 1e-4
SERIAL_VERSION = 1
_EVAL_CHUNK = 2048

_scratch = threading.local()


def softplus(x):
    # np.logaddexp is ~30x slower than this form on large arrays
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def inv_softplus(y):
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


def raw_for_scale(scale):
    """Raw parameter whose mapped scale equals `scale` (scale > SCALE_FLOOR)."""
    return inv_softplus(np.asarray(scale, dtype=float) - SCALE_FLOOR)


def positive_scale(raw):
    return softplus(raw) + SCALE_FLOOR


@dataclass(frozen=True)
class MixtureParams:
    """One univariate Gaussian mixture: simplex weights, means, positive scales."""

    weights: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        m = np.atleast_1d(np.asarray(self.means, dtype=float))
        s = np.atleast_1d(np.asarray(self.scales, dtype=float))
        if not (w.ndim == m.ndim == s.ndim == 1) or not (w.size == m.size == s.size) or w.size < 1:
            raise ValueError("weights, means and scales must be 1-D arrays of equal length K >= 1")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(m)) and np.all(np.isfinite(s))):
            raise ValueError("invalid input")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        if np.any(s <= 0):
            raise ValueError("scales must be strictly positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "scales", s)

    @property
    def kernel_count(self) -> int:
        return self.weights.size


def mixture_log_density(params: MixtureParams, y: float) -> float:
    """log sum_k w_k N(y; mu_k, sigma_k), evaluated without forming densities."""
    y = float(y)
    if not math.isfinite(y):
        raise ValueError("invalid input")
    with np.errstate(divide="ignore"):
        logw = np.log(params.weights)
    u = (y - params.means) / params.scales
    comp = logw - np.log(params.scales) - 0.5 * u * u - 0.5 * LOG_2PI
    top = comp.max()
    return float(top + math.log(np.exp(comp - top).sum()))


def _log_softmax(logits):
    top = logits.max(axis=-1, keepdims=True)
    shifted = logits - top
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _workspace(shape, count, dtype=np.float64):
    """Per-thread scratch arrays reused across calls of the same shape."""
    cache = getattr(_scratch, "cache", None)
    if cache is None:
        cache = _scratch.cache = {}
    key = (shape, count, np.dtype(dtype).char)
    bufs = cache.get(key)
    if bufs is None:
        if len(cache) >= 6:
            cache.clear()
        bufs = cache[key] = [np.empty(shape, dtype=dtype) for _ in range(count)]
    return bufs


def _mixture_terms(logits, means, raw, y, grad_out=None):
    """Per-row mixtures: log q(y_i) and (optionally) gradients of sum_i log q(y_i).

    `logits`, `means`, `raw` are (B, K); `y` is (B,). When `grad_out` (B, 3K)
    is given, the gradients w.r.t. logits, means and raw scales are written
    into its three column blocks.
    """
    n, k = logits.shape
    A, W, E, S, SC, U, D = _workspace((n, k), 7, logits.dtype)
    lmax = logits.max(axis=1, keepdims=True)
    np.subtract(logits, lmax, out=A)
    np.exp(A, out=W)
    wsum = W.sum(axis=1, keepdims=True)
    A -= np.log(wsum)
    # softplus(raw) = max(raw, 0) + log1p(exp(-|raw|))
    np.abs(raw, out=E)
    np.negative(E, out=E)
    np.exp(E, out=E)
    np.log1p(E, out=S)
    np.maximum(raw, 0.0, out=D)
    S += D
    np.add(S, SCALE_FLOOR, out=SC)
    np.subtract(y[:, None].astype(U.dtype, copy=False), means, out=U)
    U /= SC
    np.log(SC, out=D)
    A -= D
    np.multiply(U, U, out=D)
    D += LOG_2PI
    D *= 0.5
    A -= D
    top = A.max(axis=1, keepdims=True)
    A -= top
    np.exp(A, out=A)
    total = A.sum(axis=1, keepdims=True)
    logp = (top + np.log(total))[:, 0]
    if grad_out is None:
        return logp
    A /= total  # responsibilities
    W /= wsum
    np.subtract(A, W, out=grad_out[:, :k])
    np.multiply(A, U, out=D)
    np.divide(D, SC, out=grad_out[:, k:2 * k])
    U *= U
    U -= 1.0
    U *= A
    U /= SC
    # d softplus / d raw = 1 - exp(-softplus(raw))
    np.negative(S, out=S)
    np.expm1(S, out=S)
    np.negative(S, out=S)
    np.multiply(U, S, out=grad_out[:, 2 * k:])
    return logp


def _shared_terms(logits, means, raw, y, want_grad=False):
    """One mixture shared by every sample: log q(y_i) and gradients of their sum."""
    logw = _log_softmax(logits)
    sp = softplus(raw)
    scales = sp + SCALE_FLOOR
    const = logw - np.log(scales) - 0.5 * LOG_2PI
    n, k = y.size, logits.size
    A, U = _workspace((n, k), 2)
    np.subtract(y[:, None], means, out=U)
    U /= scales
    np.multiply(U, U, out=A)
    A *= -0.5
    A += const
    top = A.max(axis=1, keepdims=True)
    A -= top
    np.exp(A, out=A)
    total = A.sum(axis=1, keepdims=True)
    logp = (top + np.log(total))[:, 0]
    if not want_grad:
        return logp, None
    A /= total
    r_sum = A.sum(axis=0)
    A *= U
    ru_sum = A.sum(axis=0)
    A *= U
    ruu_sum = A.sum(axis=0)
    d_logits = r_sum - n * np.exp(logw)
    d_means = ru_sum / scales
    d_raw = (ruu_sum - r_sum) / scales * (-np.expm1(-sp))
    return logp, (d_logits, d_means, d_raw)


def _as_float(a):
    """float64 unless the input is already float32 (kept for fast training steps)."""
    a = np.asarray(a)
    return a if a.dtype == np.float32 else a.astype(float, copy=False)


def _check_batch(y):
    y = _as_float(y).reshape(-1)
    if y.size == 0:
        raise ValueError("empty batch")
    if not np.all(np.isfinite(y)):
        raise ValueError("invalid input")
    return y


@dataclass
class MarginalMixtureModel:
    """Directly trainable mixture q(y); weights stored as logits, scales pre-softplus."""

    logits: np.ndarray
    means: np.ndarray
    raw_scales: np.ndarray

    @classmethod
    def initialize(cls, y, kernel_count: int, rng: np.random.Generator) -> "MarginalMixtureModel":
        """Means at a random subsample of `y`; common scale std(y) * K^(-1/5)."""
        y = _check_batch(y)
        replace = kernel_count > y.size
        means = rng.choice(y, size=kernel_count, replace=replace).astype(float)
        scale = max(float(y.std()) * kernel_count ** (-0.2), 10 * SCALE_FLOOR)
        return cls(
            logits=np.zeros(kernel_count),
            means=means,
            raw_scales=np.full(kernel_count, float(raw_for_scale(scale))),
        )

    @classmethod
    def from_params(cls, params: MixtureParams) -> "MarginalMixtureModel":
        if np.any(params.scales <= SCALE_FLOOR):
            raise ValueError("scales must exceed the scale floor")
        with np.errstate(divide="ignore"):
            logits = np.log(params.weights)
        if not np.all(np.isfinite(logits)):
            raise ValueError("zero weights cannot be represented as logits")
        return cls(logits=logits, means=params.means.copy(), raw_scales=raw_for_scale(params.scales))

    @property
    def kernel_count(self) -> int:
        return self.logits.size

    @property
    def params(self) -> MixtureParams:
        w = np.exp(_log_softmax(self.logits))
        return MixtureParams(w / w.sum(), self.means.copy(), positive_scale(self.raw_scales))

    def parameters(self) -> list:
        return [self.logits, self.means, self.raw_scales]

    def with_parameters(self, arrays: Sequence[np.ndarray]) -> "MarginalMixtureModel":
        logits, means, raw = (np.asarray(a, dtype=float) for a in arrays)
        return MarginalMixtureModel(logits, means, raw)

    def log_density(self, y) -> np.ndarray:
        y = _check_batch(y)
        out = np.empty(y.size)
        for s in range(0, y.size, _EVAL_CHUNK):
            out[s:s + _EVAL_CHUNK] = _shared_terms(
                self.logits, self.means, self.raw_scales, y[s:s + _EVAL_CHUNK])[0]
        return out

    def loss_and_gradients(self, y):
        y = _check_batch(y)
        logp, (dl, dm, dr) = _shared_terms(self.logits, self.means, self.raw_scales, y, want_grad=True)
        g = -1.0 / y.size
        return -float(logp.mean()), [g * dl, g * dm, g * dr]


def _glorot(fan_in, fan_out, rng):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class ConditionalMixtureModel:
    """Feed-forward tanh network emitting a K-component mixture per input row.

    The head output is split into three blocks of width K: weight logits
    (softmax), means (identity) and raw scales (softplus + floor).
    """

    layers: list
    head: tuple
    dropout_rate: float = 0.1
    _input_dim: Optional[int] = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.head[1].size % 3:
            raise ValueError("head width must be a multiple of 3")
        if self._input_dim is None:
            self._input_dim = self.layers[0][0].shape[0] if self.layers else self.head[0].shape[0]

    @classmethod
    def initialize(cls, input_dim: int, hidden_dim: int, layer_count: int, kernel_count: int,
                   rng: np.random.Generator, y=None, dropout_rate: float = 0.1) -> "ConditionalMixtureModel":
        """Glorot-uniform hidden layers; head biases start at a KDE-like mixture of `y`."""
        if min(input_dim, hidden_dim, kernel_count) < 1 or layer_count < 0:
            raise ValueError("dimensions must be positive")
        layers = []
        fan_in = input_dim
        for _ in range(layer_count):
            layers.append((_glorot(fan_in, hidden_dim, rng), np.zeros(hidden_dim)))
            fan_in = hidden_dim
        k = kernel_count
        head_w = _glorot(fan_in, 3 * k, rng)
        head_b = np.zeros(3 * k)
        if y is not None:
            y = _check_batch(y)
            head_b[k:2 * k] = rng.choice(y, size=k, replace=k > y.size)
            spread = float(y.std())
        else:
            head_b[k:2 * k] = np.linspace(-2.0, 2.0, k) if k > 1 else 0.0
            spread = 1.0
        head_b[2 * k:] = raw_for_scale(max(spread * k ** (-0.2), 10 * SCALE_FLOOR))
        return cls(layers=layers, head=(head_w, head_b), dropout_rate=dropout_rate, _input_dim=input_dim)

    @property
    def input_dim(self) -> int:
        return self._input_dim

    @property
    def kernel_count(self) -> int:
        return self.head[1].size // 3

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    def parameters(self) -> list:
        flat = []
        for w, b in self.layers:
            flat += [w, b]
        return flat + [self.head[0], self.head[1]]

    def with_parameters(self, arrays: Sequence[np.ndarray]) -> "ConditionalMixtureModel":
        arrays = [_as_float(a) for a in arrays]
        if len(arrays) != 2 * len(self.layers) + 2:
            raise ValueError("parameter count does not match the model layout")
        layers = [(arrays[2 * i], arrays[2 * i + 1]) for i in range(len(self.layers))]
        return ConditionalMixtureModel(layers, (arrays[-2], arrays[-1]), self.dropout_rate, self._input_dim)

    def astype(self, dtype) -> "ConditionalMixtureModel":
        return self.with_parameters([a.astype(dtype) for a in self.parameters()])

    def draw_masks(self, batch: int, rng: np.random.Generator, dtype=np.float64) -> list:
        """Inverted-dropout masks, one (batch, hidden) array per hidden layer."""
        keep = 1.0 - self.dropout_rate
        if self.dropout_rate == 0.0:
            return [None] * len(self.layers)
        return [((rng.random((batch, w.shape[1])) < keep) / keep).astype(dtype, copy=False)
                for w, _ in self.layers]

    def _check_inputs(self, Z):
        Z = _as_float(Z)
        if Z.ndim == 1:
            Z = Z.reshape(1, -1) if Z.size == self.input_dim else Z.reshape(-1, 1)
        if Z.ndim != 2 or Z.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} features, got shape {Z.shape}")
        if not np.all(np.isfinite(Z)):
            raise ValueError("invalid input")
        return Z

    def _hidden(self, Z, masks=None):
        acts, a = [], Z
        for i, (w, b) in enumerate(self.layers):
            t = np.tanh(a @ w + b)
            m = masks[i] if masks is not None else None
            acts.append((a, t, m))
            a = t * m if m is not None else t
        return a, acts

    def raw_head(self, Z, masks=None):
        """Raw (logits, means, raw_scales), each (B, K), for validated inputs Z."""
        a, _ = self._hidden(Z, masks)
        out = a @ self.head[0] + self.head[1]
        k = self.kernel_count
        return out[:, :k], out[:, k:2 * k], out[:, 2 * k:]

    def log_density(self, Z, y, masks=None) -> np.ndarray:
        """log q(y_i | z_i) for each row; dropout only if `masks` is given."""
        Z = self._check_inputs(Z)
        y = _check_batch(y)
        if Z.shape[0] != y.size:
            raise ValueError("length mismatch between features and targets")
        out = np.empty(y.size)
        for s in range(0, y.size, _EVAL_CHUNK):
            sl = slice(s, s + _EVAL_CHUNK)
            mk = None if masks is None else [None if m is None else m[sl] for m in masks]
            logits, means, raw = self.raw_head(Z[sl], mk)
            out[sl] = _mixture_terms(logits, means, raw, y[sl])
        return out

    def loss_and_gradients(self, Z, y, masks=None):
        Z = self._check_inputs(Z)
        y = _check_batch(y)
        if Z.shape[0] != y.size:
            raise ValueError("length mismatch between features and targets")
        a, acts = self._hidden(Z, masks)
        hw, hb = self.head
        out = a @ hw + hb
        k = self.kernel_count
        d_out = np.empty_like(out)
        logp = _mixture_terms(out[:, :k], out[:, k:2 * k], out[:, 2 * k:], y, grad_out=d_out)
        d_out *= -1.0 / y.size
        grads = [a.T @ d_out, d_out.sum(axis=0)]
        da = d_out @ hw.T
        for (w, _), (a_in, t, m) in zip(reversed(self.layers), reversed(acts)):
            if m is not None:
                da = da * m
            dpre = da * (1.0 - t * t)
            grads = [a_in.T @ dpre, dpre.sum(axis=0)] + grads
            da = dpre @ w.T
        return -float(logp.mean()), grads


def conditional_forward(model: ConditionalMixtureModel, x, dropout_active: bool = False,
                        rng: Optional[np.random.Generator] = None) -> MixtureParams:
    """Mixture emitted for a single feature vector `x`."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != model.input_dim:
        raise ValueError(f"expected {model.input_dim} features, got {x.size}")
    Z = model._check_inputs(x.reshape(1, -1))
    masks = None
    if dropout_active:
        if rng is None:
            raise ValueError("dropout requires an rng")
        masks = model.draw_masks(1, rng)
    logits, means, raw = model.raw_head(Z, masks)
    w = np.exp(_log_softmax(logits[0]))
    return MixtureParams(w / w.sum(), means[0].copy(), positive_scale(raw[0]))


def nll_loss(model, y, X=None, masks=None) -> float:
    """Mean negative log-likelihood of a batch.

    `model` is a MarginalMixtureModel or MixtureParams (marginal form, X
    ignored) or a ConditionalMixtureModel (conditional form, X required).
    """
    y = _check_batch(y)
    if isinstance(model, ConditionalMixtureModel):
        if X is None:
            raise ValueError("conditional nll needs features")
        return -float(model.log_density(X, y, masks).mean())
    if isinstance(model, MixtureParams):
        return -float(np.mean([mixture_log_density(model, v) for v in y]))
    return -float(model.log_density(y).mean())


def gradients(model, y, X=None, masks=None) -> list:
    """Gradients of `nll_loss` w.r.t. every entry of `model.parameters()`."""
    if isinstance(model, ConditionalMixtureModel):
        if X is None:
            raise ValueError("conditional gradients need features")
        return model.loss_and_gradients(X, y, masks)[1]
    return model.loss_and_gradients(y)[1]


def model_to_dict(model) -> dict:
    """Versioned, JSON-ready description; floats survive the round trip exactly."""
    if isinstance(model, MarginalMixtureModel):
        return {
            "format": "predlab-mixture",
            "version": SERIAL_VERSION,
            "kind": "marginal",
            "kernel_count": model.kernel_count,
            "parameters": [a.tolist() for a in model.parameters()],
        }
    return {
        "format": "predlab-mixture",
        "version": SERIAL_VERSION,
        "kind": "conditional",
        "input_dim": model.input_dim,
        "kernel_count": model.kernel_count,
        "dropout_rate": model.dropout_rate,
        "shapes": [list(a.shape) for a in model.parameters()],
        "parameters": [a.ravel(order="C").tolist() for a in model.parameters()],
    }


def model_from_dict(doc: dict):
    if doc.get("format") != "predlab-mixture" or doc.get("version") != SERIAL_VERSION:
        raise ValueError("unsupported model document")
    if doc["kind"] == "marginal":
        return MarginalMixtureModel(*(np.array(a, dtype=float) for a in doc["parameters"]))
    arrays = [np.array(flat, dtype=float).reshape(shape) for flat, shape in zip(doc["parameters"], doc["shapes"])]
    layers = [(arrays[2 * i], arrays[2 * i + 1]) for i in range(len(arrays) // 2 - 1)]
    model = ConditionalMixtureModel(layers, (arrays[-2], arrays[-1]), float(doc["dropout_rate"]), int(doc["input_dim"]))
    if model.kernel_count != doc["kernel_count"]:
        raise ValueError("kernel count does not match head width")
    return model


def dumps_model(model) -> str:
    return json.dumps(model_to_dict(model))


def loads_model(text: str):
    return model_from_dict(json.loads(text))
