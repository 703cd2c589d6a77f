"""Shapley attributions with the interventional (marginal) value function.

v(S) = mean over background rows b of f(z), where z takes the query point's
values on S and b's values elsewhere.  Exact mode enumerates all 2^d
coalitions; sampled mode averages marginal contributions over random
feature orderings.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from math import factorial
from pathlib import Path

import numpy as np

from ._seeding import child_rng
from .data import Dataset
from .exceptions import ConfigError, DataError

MAX_EXACT_DIM = 20


@dataclass(frozen=True)
class ShapleyResult:
    phi: np.ndarray
    base_value: float
    prediction: float
    mode: str  # "exact" or "sampled"
    n_permutations: int = 0
    stderr: np.ndarray | None = None
    feature_names: tuple = ()

    @property
    def efficiency_residual(self) -> float:
        return float(abs(self.phi.sum() - (self.prediction - self.base_value)))

    def to_csv(self, path):
        names = self.feature_names or tuple(f"x{j}" for j in range(len(self.phi)))
        se = self.stderr if self.stderr is not None else np.zeros(len(self.phi))
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "phi", "mode", "stderr"])
            for name, p, s in zip(names, self.phi, se):
                w.writerow([name, f"{p:.10g}", self.mode, f"{s:.10g}"])


def _predictor(model):
    if hasattr(model, "predict_proba"):
        return model.predict_proba
    if callable(model):
        return model
    raise TypeError("model must have predict_proba or be callable")


def _background_matrix(background):
    B = background.X if isinstance(background, Dataset) else np.asarray(background, dtype=np.float64)
    if B.ndim == 1:
        B = B[None, :]
    if len(B) == 0:
        raise DataError("background set is empty")
    return B


def coalition_values(f, x, B, chunk_rows=200_000) -> np.ndarray:
    """v(S) for every coalition S, indexed by bitmask (bit j = feature j)."""
    d = B.shape[1]
    n_masks = 1 << d
    bits = ((np.arange(n_masks)[:, None] >> np.arange(d)[None, :]) & 1).astype(bool)
    per_chunk = max(1, chunk_rows // len(B))
    v = np.empty(n_masks)
    for start in range(0, n_masks, per_chunk):
        m = bits[start:start + per_chunk]
        Z = np.where(m[:, None, :], x[None, None, :], B[None, :, :])
        preds = np.asarray(f(Z.reshape(-1, d)), dtype=np.float64)
        v[start:start + len(m)] = preds.reshape(len(m), len(B)).mean(axis=1)
    return v


def shapley_from_values(v, d) -> np.ndarray:
    """Exact Shapley values from a full table of coalition values."""
    masks = np.arange(1 << d)
    sizes = np.array([bin(m).count("1") for m in masks])
    coef = np.array([factorial(s) * factorial(d - s - 1) / factorial(d) for s in range(d)])
    phi = np.zeros(d)
    for j in range(d):
        without = masks[(masks >> j) & 1 == 0]
        phi[j] = np.sum(coef[sizes[without]] * (v[without | (1 << j)] - v[without]))
    return phi


def _sampled(f, x, B, n_permutations, rng, chunk_perms=None):
    d = B.shape[1]
    nb = len(B)
    chunk_perms = chunk_perms or max(1, 200_000 // (nb * (d + 1)))
    contrib = np.empty((n_permutations, d))
    for start in range(0, n_permutations, chunk_perms):
        P = min(chunk_perms, n_permutations - start)
        perms = np.argsort(rng.random((P, d)), axis=1)
        # step t has the first t features of the permutation switched to x
        rank = np.argsort(perms, axis=1)
        on = rank[:, None, :] < np.arange(d + 1)[None, :, None]  # (P, d+1, d)
        Z = np.where(on[:, :, None, :], x[None, None, None, :], B[None, None, :, :])
        vals = np.asarray(f(Z.reshape(-1, d)), dtype=np.float64).reshape(P, d + 1, nb).mean(axis=2)
        steps = np.diff(vals, axis=1)  # (P, d): gain when perms[:, t] is added
        rows = np.arange(P)[:, None]
        c = np.empty((P, d))
        c[rows, perms] = steps
        contrib[start:start + P] = c
    return contrib


def shapley_values(model, background, x, mode="exact", n_permutations=2000, seed=0, feature_names=()) -> ShapleyResult:
    """Attribute ``f(x) - mean_b f(b)`` to the features of ``x``."""
    f = _predictor(model)
    B = _background_matrix(background)
    x = np.asarray(x, dtype=np.float64).ravel()
    d = B.shape[1]
    if x.size != d:
        raise DataError(f"query point has {x.size} features, background has {d}")
    if not feature_names and isinstance(background, Dataset):
        feature_names = background.feature_names
    base = float(np.mean(f(B)))
    pred = float(np.asarray(f(x[None, :]))[0])
    if mode == "exact":
        if d > MAX_EXACT_DIM:
            raise ConfigError(f"exact mode is limited to d <= {MAX_EXACT_DIM}")
        v = coalition_values(f, x, B)
        return ShapleyResult(shapley_from_values(v, d), float(v[0]), float(v[-1]), "exact", 0, None, tuple(feature_names))
    if mode == "sampled":
        if n_permutations < 2:
            raise ConfigError("sampled mode needs at least 2 permutations")
        contrib = _sampled(f, x, B, n_permutations, child_rng(seed, "shapley"))
        se = contrib.std(axis=0, ddof=1) / np.sqrt(n_permutations)
        return ShapleyResult(contrib.mean(axis=0), base, pred, "sampled", n_permutations, se, tuple(feature_names))
    raise ConfigError(f"unknown Shapley mode {mode!r}")


def make_background(data: Dataset, n=100, seed=0) -> Dataset:
    if data.n <= n:
        return data
    rows = np.sort(child_rng(seed, "background").choice(data.n, n, replace=False))
    return data.subset(rows)


@dataclass(frozen=True)
class ShapleySummary:
    feature_names: tuple
    mean_abs_phi: np.ndarray
    method: str = ""

    def as_dict(self):
        return dict(zip(self.feature_names, self.mean_abs_phi.tolist()))


def mean_abs_shapley(model, data: Dataset, background, features=None, max_rows=500, seed=0, mode="exact",
                     n_permutations=2000, method="") -> ShapleySummary:
    """Mean |phi_j| over (at most ``max_rows``) query rows of ``data``."""
    names = data.feature_names
    features = tuple(features) if features else names
    cols = [data.feature_index(f) for f in features]
    rows = np.arange(data.n)
    if data.n > max_rows:
        rows = np.sort(child_rng(seed, "shapley_rows").choice(data.n, max_rows, replace=False))
    acc = np.zeros(data.d)
    for i in rows:
        res = shapley_values(model, background, data.X[i], mode, n_permutations, seed=seed + int(i))
        acc += np.abs(res.phi)
    return ShapleySummary(features, acc[cols] / len(rows), method)


def write_summaries(summaries, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "mean_abs_phi", "method"])
        for s in summaries:
            for name, v in zip(s.feature_names, s.mean_abs_phi):
                w.writerow([name, f"{v:.6f}", s.method])


def reference_distance(summary: ShapleySummary, reference: ShapleySummary) -> float:
    """Euclidean distance between two summaries over their shared features."""
    ref = reference.as_dict()
    return float(np.sqrt(sum((v - ref[k]) ** 2 for k, v in summary.as_dict().items() if k in ref)))
