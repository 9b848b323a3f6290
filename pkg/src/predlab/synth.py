"""Synthetic regression tasks with known conditional entropy.

Features are uniform on [-50, 50]; the target is a task function plus
additive noise, so H(Y|X) equals the noise entropy.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr

from .bounds import NoiseKind, noise_entropy, noise_mae, noise_param_for_mse, noise_variance
from .data import LabeledDataset

FEATURE_HALF_WIDTH = 50.0


class SynthTaskKind(str, enum.Enum):
    LINEARITY = "linearity"
    NONLINEARITY = "nonlinearity"
    INTERACTION = "interaction"
    MULTIVARIATE = "multivariate"

    @property
    def feature_count(self) -> int:
        return {"linearity": 1, "nonlinearity": 1, "interaction": 2, "multivariate": 4}[self.value]


def _task(task) -> SynthTaskKind:
    return task if isinstance(task, SynthTaskKind) else SynthTaskKind(str(task).lower())


@dataclass
class SynthGroundTruth:
    task: str
    noise: str
    noise_param: float
    h_cond_true: float
    mse_true: float
    mae_true: float

    def to_dict(self) -> dict:
        return asdict(self)


def gen_features(task, n: int, rng) -> np.ndarray:
    task = _task(task)
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.uniform(-FEATURE_HALF_WIDTH, FEATURE_HALF_WIDTH, size=(n, task.feature_count))


def task_mean(task, x) -> np.ndarray:
    """Noise-free target for one feature vector or a matrix of rows."""
    task = _task(task)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x.reshape(1, -1) if single else x
    if X.shape[1] != task.feature_count:
        raise ValueError(f"{task.value} expects {task.feature_count} features, got {X.shape[1]}")
    if task is SynthTaskKind.LINEARITY:
        out = X[:, 0].copy()
    elif task is SynthTaskKind.NONLINEARITY:
        out = 50.0 * np.sin(np.pi * X[:, 0] / 50.0)
    elif task is SynthTaskKind.INTERACTION:
        out = X[:, 0] * np.sin(np.pi * X[:, 1] / 50.0)
    else:
        out = X[:, 0] * np.sin(np.pi * X[:, 1] / 50.0) + X[:, 2]
    return float(out[0]) if single else out


def sample_noise(kind, param: float, n: int, rng) -> np.ndarray:
    """Noise draws; uniform and Laplace through inverse CDFs of one uniform stream."""
    kind = NoiseKind(kind)
    if kind is NoiseKind.GAUSSIAN:
        return param * rng.standard_normal(n)
    u = rng.random(n)
    if kind is NoiseKind.UNIFORM:
        return (u - 0.5) * param
    c = u - 0.5
    return -param * np.sign(c) * np.log1p(-2.0 * np.abs(c))


def noise_log_pdf(kind, param: float, e) -> np.ndarray:
    kind = NoiseKind(kind)
    e = np.asarray(e, dtype=float)
    if kind is NoiseKind.GAUSSIAN:
        return -0.5 * np.log(2 * np.pi * param * param) - 0.5 * (e / param) ** 2
    if kind is NoiseKind.LAPLACIAN:
        return -np.log(2 * param) - np.abs(e) / param
    return np.where(np.abs(e) <= param / 2, -np.log(param), -np.inf)


def gen_dataset(task, noise_kind, target_mse: float, n: int, seed: int):
    """y = task_mean(x) + noise at the parameter giving variance `target_mse`."""
    task = _task(task)
    kind = NoiseKind(noise_kind)
    param = noise_param_for_mse(kind, target_mse)
    rng = np.random.default_rng(seed)
    X = gen_features(task, n, rng)
    y = task_mean(task, X) + sample_noise(kind, param, n, rng)
    ds = LabeledDataset(X, y, [f"x{i + 1}" for i in range(task.feature_count)], "y")
    truth = SynthGroundTruth(
        task=task.value,
        noise=kind.value,
        noise_param=param,
        h_cond_true=noise_entropy(kind, param),
        mse_true=noise_variance(kind, param),
        mae_true=noise_mae(kind, param),
    )
    return ds, truth


@dataclass
class LinearGaussianDensities:
    """x ~ U(-50, 50), y = x + N(0, sigma^2): exact densities and information quantities."""

    sigma: float
    h_cond: float
    h_marg: float
    mi: float
    kl_product_joint: float

    def log_cond(self, y, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(np.shape(y))
        return -0.5 * math.log(2 * math.pi * self.sigma ** 2) - 0.5 * ((np.asarray(y) - x) / self.sigma) ** 2

    def log_marg(self, y) -> np.ndarray:
        return _uniform_normal_logpdf(np.asarray(y, dtype=float), self.sigma)


def _uniform_normal_logpdf(y, sigma, half=FEATURE_HALF_WIDTH):
    # log[(Phi((y+a)/s) - Phi((y-a)/s)) / 2a], folded to |y| for stability
    t = np.abs(y)
    hi = log_ndtr((half - t) / sigma)
    lo = log_ndtr((-half - t) / sigma)
    return hi + np.log1p(-np.exp(lo - hi)) - math.log(2 * half)


def _breakpoints(sigma, half=FEATURE_HALF_WIDTH):
    # resolve the two edges, which are only ~sigma wide
    if sigma >= half:
        return None
    offs = [o * sigma for o in (-6, -2, 0, 2, 6) if o * sigma < half]
    return sorted({e + o for e in (-half, half) for o in offs})


def linear_gaussian_analytic(sigma: float) -> LinearGaussianDensities:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    a = FEATURE_HALF_WIDTH
    lo, hi = -a - 12 * sigma, a + 12 * sigma
    breaks = _breakpoints(sigma)

    def integrand(v):
        lp = float(_uniform_normal_logpdf(np.array(v), sigma))
        return -math.exp(lp) * lp

    h_marg = integrate.quad(integrand, lo, hi, points=breaks, limit=500, epsabs=1e-12, epsrel=1e-12)[0]
    h_cond = 0.5 * math.log(2 * math.pi * math.e * sigma ** 2)
    var_x = (2 * a) ** 2 / 12.0
    # E_{p(x)p(y)}[-log p(y|x)] with E(y - x)^2 = var_y + var_x
    cross = 0.5 * math.log(2 * math.pi * sigma ** 2) + (2 * var_x + sigma ** 2) / (2 * sigma ** 2)
    return LinearGaussianDensities(
        sigma=sigma,
        h_cond=h_cond,
        h_marg=h_marg,
        mi=h_marg - h_cond,
        kl_product_joint=cross - h_marg,
    )


def marginal_mass(sigma: float) -> float:
    """Numerical integral of the uniform-normal convolution density (should be 1)."""
    a = FEATURE_HALF_WIDTH
    f = lambda v: math.exp(float(_uniform_normal_logpdf(np.array(v), sigma)))  # noqa: E731
    return integrate.quad(f, -a - 12 * sigma, a + 12 * sigma, points=_breakpoints(sigma), limit=500,
                          epsabs=1e-13)[0]
