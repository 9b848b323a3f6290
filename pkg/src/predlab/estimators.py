"""Conditional-entropy estimators built on fitted mixture densities.

All entropies are in nats. `run_algorithm1` is the end-to-end pipeline:
z-score features, standardize the target, and for each repetition fit the
marginal and conditional mixtures on a shared train/validation split, then
score the validation rows.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .mixmodel import ConditionalMixtureModel, MarginalMixtureModel
from .trainer import (
    Normalizer,
    TrainConfig,
    TrainingDiverged,
    fit_conditional,
    fit_marginal,
    split_indices,
    zscore_fit,
)

log = logging.getLogger(__name__)

ESTIMATORS = ("knifecp", "knifedp", "lmcp")


def _as_matrix(X):
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def _validate_pairs(X, y):
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.size:
        raise ValueError("length mismatch between features and targets")
    if y.size == 0:
        raise ValueError("empty validation set")
    return X, y


def knife_cond_entropy(model: ConditionalMixtureModel, X_val, y_val) -> float:
    """-mean log q(y|x) over validation pairs (dropout off)."""
    X_val, y_val = _validate_pairs(X_val, y_val)
    return -float(model.log_density(X_val, y_val).mean())


def knife_marg_entropy(model: MarginalMixtureModel, y_val) -> float:
    y_val = np.asarray(y_val, dtype=float).reshape(-1)
    if y_val.size == 0:
        raise ValueError("empty validation set")
    return -float(model.log_density(y_val).mean())


def lmc_entropy(cond: ConditionalMixtureModel, marg: MarginalMixtureModel, X_val, y_val, rng,
                permutation=None) -> float:
    """H_marg + H_cond + mean log q(y_i | x_perm(i)) with a uniform random permutation.

    Self-matches are allowed. Pass `permutation` to fix the pairing.
    """
    X_val, y_val = _validate_pairs(X_val, y_val)
    perm = rng.permutation(y_val.size) if permutation is None else np.asarray(permutation)
    if perm.size != y_val.size:
        raise ValueError("permutation length mismatch")
    h_marg = knife_marg_entropy(marg, y_val)
    h_cond = knife_cond_entropy(cond, X_val, y_val)
    cross = float(cond.log_density(X_val[perm], y_val).mean())
    # grouped so an x-independent head cancels exactly
    return h_marg + (h_cond + cross)


def club_lower_entropy(cond: ConditionalMixtureModel, X_val, y_val, rng, permutation=None) -> float:
    """CLUB-style lower bound; O(N^2) in the number of validation rows.

    -(1/N) sum_i [ log (1/N) sum_j q(y_i|x_j) + log q(y_i|x_i) - log q(y_i|x~_i) ]
    """
    X_val, y_val = _validate_pairs(X_val, y_val)
    n = y_val.size
    perm = rng.permutation(n) if permutation is None else np.asarray(permutation)
    if perm.size != n:
        raise ValueError("permutation length mismatch")
    # pair[i, j] = log q(y_i | x_j)
    pair = np.empty((n, n))
    for j in range(n):
        pair[:, j] = cond.log_density(np.repeat(X_val[j:j + 1], n, axis=0), y_val)
    top = pair.max(axis=1)
    log_avg = top + np.log(np.exp(pair - top[:, None]).sum(axis=1)) - math.log(n)
    own = pair[np.arange(n), np.arange(n)]
    shuffled = pair[np.arange(n), perm]
    return -float(np.mean(log_avg + own - shuffled))


def lmc_oracle(logp_cond: Callable, logp_marg: Callable, x, y, rng, return_stderr=False):
    """LMC value with known densities substituted for fitted ones.

    `logp_cond(y, x)` and `logp_marg(y)` are vectorized log densities. The
    expected value is H(Y|X) - KL(p(x)p(y) || p(x,y)).
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float)
    perm = rng.permutation(y.size)
    terms = -logp_marg(y) - logp_cond(y, x) + logp_cond(y, x[perm])
    value = float(terms.mean())
    if return_stderr:
        return value, float(terms.std(ddof=1) / math.sqrt(y.size))
    return value


def lower_median(values) -> float:
    vals = sorted(float(v) for v in values)
    if not vals:
        raise ValueError("no values")
    return vals[(len(vals) - 1) // 2]


@dataclass
class EstimateReport:
    h_knifecp: float
    h_knifedp: float
    h_lmcp: float
    per_repetition: list
    variances: dict
    config_echo: TrainConfig
    normalizer: Normalizer
    target_normalizer: Optional[Normalizer] = None
    failures: list = field(default_factory=list)
    traces: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "h_knifecp": self.h_knifecp,
            "h_knifedp": self.h_knifedp,
            "h_lmcp": self.h_lmcp,
            "reps": self.per_repetition,
            "variances": self.variances,
            "config": self.config_echo.to_dict(),
            "failures": self.failures,
        }


def _repetition(args):
    Z, yn, log_scale, cfg, rep = args
    rng = np.random.default_rng(cfg.seed + rep)
    split = split_indices(yn.size, cfg.val_fraction, rng)
    try:
        marg, marg_trace = fit_marginal(yn, cfg, rng, split=split)
        cond, cond_trace = fit_conditional(Z, yn, cfg, rng, split=split)
    except TrainingDiverged as exc:
        return {"repetition": rep, "seed": cfg.seed + rep, "error": str(exc)}
    val = split[1]
    z_val, y_val = Z[val], yn[val]
    h_cond = knife_cond_entropy(cond, z_val, y_val)
    h_marg = knife_marg_entropy(marg, y_val)
    h_lmc = lmc_entropy(cond, marg, z_val, y_val, rng)
    return {
        "repetition": rep,
        "seed": cfg.seed + rep,
        "h_knifecp": h_cond + log_scale,
        "h_knifedp": h_marg + log_scale,
        "h_lmcp": h_lmc + log_scale,
        "traces": {"marginal": marg_trace.summary(), "conditional": cond_trace.summary()},
    }


def _workers(requested: Optional[int]) -> int:
    cap = os.environ.get("PREDLAB_THREADS")
    n = requested if requested is not None else (int(cap) if cap else 1)
    if cap:
        n = min(n, int(cap))
    return max(1, n)


def run_algorithm1(X_raw, y, cfg: TrainConfig, workers: Optional[int] = None) -> EstimateReport:
    """Normalize, fit per repetition, and report median entropies (original y units)."""
    X = _as_matrix(X_raw)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.size:
        raise ValueError("length mismatch between features and targets")
    if y.size < 10 or X.shape[1] < 1:
        raise ValueError("need N >= 10 rows and d >= 1 features")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in data")
    norm = zscore_fit(X)
    Z = norm.apply(X)
    ynorm = zscore_fit(y)
    if ynorm.stds[0] <= 1e-12:
        raise ValueError("target is constant")
    yn = ynorm.apply(y[:, None])[:, 0]
    log_scale = math.log(float(ynorm.stds[0]))
    jobs = [(Z, yn, log_scale, cfg, rep) for rep in range(cfg.repetitions)]
    n_workers = min(_workers(workers), len(jobs))
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            results = list(pool.map(_repetition, jobs))
    else:
        results = [_repetition(job) for job in jobs]
    ok = [r for r in results if "error" not in r]
    failures = [r for r in results if "error" in r]
    for f in failures:
        log.warning("repetition %d failed: %s", f["repetition"], f["error"])
    if not ok:
        raise RuntimeError("all repetitions failed: " + "; ".join(f["error"] for f in failures))
    reps = [{k: r[k] for k in ("repetition", "seed", "h_knifecp", "h_knifedp", "h_lmcp")} for r in ok]
    variances = {
        e: float(np.var([r[f"h_{e}"] for r in ok], ddof=1)) if len(ok) > 1 else 0.0 for e in ESTIMATORS
    }
    return EstimateReport(
        h_knifecp=lower_median(r["h_knifecp"] for r in ok),
        h_knifedp=lower_median(r["h_knifedp"] for r in ok),
        h_lmcp=lower_median(r["h_lmcp"] for r in ok),
        per_repetition=reps,
        variances=variances,
        config_echo=cfg,
        normalizer=norm,
        target_normalizer=ynorm,
        failures=[{"repetition": f["repetition"], "seed": f["seed"], "error": f["error"]} for f in failures],
        traces=[{"repetition": r["repetition"], **r["traces"]} for r in ok],
    )


def gauss_doe_entropy(X, y, cfg: TrainConfig, rng=None, workers: Optional[int] = None):
    """Single-Gaussian baseline: the same pipeline with one kernel; returns (h_cond, h_marg)."""
    seed = cfg.seed if rng is None else int(rng.integers(2**31 - 1))
    report = run_algorithm1(X, y, cfg.replace(kernel_count=1, seed=seed), workers=workers)
    return report.h_knifecp, report.h_knifedp
