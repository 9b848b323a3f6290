"""Tabular ingestion, splitting and PCA."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Base class for ingestion problems."""


class UnreadableFile(DataError):
    pass


class MissingTargetColumn(DataError):
    pass


class NoUsableRows(DataError):
    pass


@dataclass
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list
    target_name: str
    dropped_rows: int = 0

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.X.shape[0] != self.y.size:
            raise ValueError("row counts of X and y differ")
        if len(self.feature_names) != self.X.shape[1]:
            raise ValueError("feature_names length does not match X")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("non-finite values in dataset")
        self.feature_names = list(self.feature_names)

    def __len__(self) -> int:
        return self.y.size

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.X[idx], self.y[idx], self.feature_names, self.target_name)


def _parse(cell: str):
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_table(path, target_column: str) -> LabeledDataset:
    """Read a headed CSV. Every non-target column is a feature.

    Rows with an empty, non-numeric or non-finite cell, or the wrong number of
    cells, are dropped; the count is kept in `dropped_rows`.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise UnreadableFile(f"{path} has no header row")
    header = [h.strip() for h in rows[0]]
    if target_column not in header:
        raise MissingTargetColumn(f"target column {target_column!r} not found in {path}")
    t = header.index(target_column)
    feats = [i for i in range(len(header)) if i != t]
    good, dropped = [], 0
    for row in rows[1:]:
        if not row or all(not c.strip() for c in row):
            continue
        vals = [_parse(c) for c in row] if len(row) == len(header) else None
        if vals is None or any(v is None for v in vals):
            dropped += 1
            continue
        good.append(vals)
    if not good:
        raise NoUsableRows(f"no usable rows in {path} ({dropped} dropped)")
    arr = np.array(good, dtype=float)
    return LabeledDataset(arr[:, feats], arr[:, t], [header[i] for i in feats], target_column, dropped)


def write_table(ds: LabeledDataset, path) -> None:
    """Write with repr() floats so a reload is bitwise exact."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*ds.feature_names, ds.target_name])
        for xi, yi in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])


def train_test_split(ds: LabeledDataset, test_fraction: float, seed: int):
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    n = len(ds)
    n_test = int(round(n * test_fraction))
    if n < 2 or n_test < 1 or n_test > n - 1:
        raise ValueError(f"split of {n} rows at {test_fraction} leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    return ds.subset(np.sort(perm[n_test:])), ds.subset(np.sort(perm[:n_test]))


@dataclass
class PcaModel:
    feature_means: np.ndarray
    components: np.ndarray
    ev_ratios: np.ndarray
    eigenvalues: np.ndarray = field(default=None)

    @property
    def dim(self) -> int:
        return self.feature_means.size

    def k_for_threshold(self, threshold: float) -> int:
        if not 0 < threshold <= 1:
            raise ValueError("ev threshold must be in (0, 1]")
        cum = np.cumsum(self.ev_ratios)
        # tolerance keeps 1.0 from overshooting on round-off; zero-variance directions never count
        k = int(np.searchsorted(cum, threshold - 1e-12) + 1)
        return min(k, self.dim)


def pca_fit(X) -> PcaModel:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("pca_fit needs a 2-D array with at least 2 rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite values in X")
    means = X.mean(axis=0)
    cov = np.cov(X - means, rowvar=False, ddof=1).reshape(X.shape[1], X.shape[1])
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    comps = vecs[:, order].T
    pivot = np.argmax(np.abs(comps), axis=1)
    comps *= np.sign(comps[np.arange(comps.shape[0]), pivot])[:, None]
    total = vals.sum()
    if total <= 0:
        raise ValueError("features have zero total variance")
    return PcaModel(means, comps, vals / total, vals)


def pca_reduce(model: PcaModel, X, k: int | None = None, ev_threshold: float | None = None) -> np.ndarray:
    if (k is None) == (ev_threshold is None):
        raise ValueError("give exactly one of k or ev_threshold")
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise ValueError("X does not match the fitted feature space")
    if k is None:
        k = model.k_for_threshold(ev_threshold)
    if not 1 <= k <= model.dim:
        raise ValueError(f"k={k} outside [1, {model.dim}]")
    return (X - model.feature_means) @ model.components[:k].T
