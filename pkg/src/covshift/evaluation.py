"""Discrimination/calibration metrics, stratified CV, grid search and intervals."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from . import learners
from .data import Dataset
from .exceptions import ConfigError, DataError
from .learners import LearnerSpec

REPORT_COLUMNS = ("model", "correction", "auroc", "auroc_lo", "auroc_hi", "brier", "brier_lo", "brier_hi", "n_test")


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with ties credited one half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise DataError("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUROC needs both classes")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def brier(probs, labels) -> float:
    probs = np.asarray(probs, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if probs.shape != labels.shape:
        raise DataError("probs and labels differ in length")
    if np.any((probs < 0) | (probs > 1)) or not np.all(np.isfinite(probs)):
        raise DataError("probabilities must lie in [0, 1]")
    return float(np.mean((probs - labels) ** 2))


METRICS = {"auroc": auroc, "brier": brier}


def weighted_risk(model, X, y, w, loss="squared") -> float:
    """(1/n) sum_i w_i loss(y_i, f(x_i)); ``w`` is used as given (None means ones)."""
    p = model.predict_proba(X)
    y = np.asarray(y, dtype=np.float64)
    w = np.ones(len(y)) if w is None else np.asarray(w, dtype=np.float64)
    if loss == "squared":
        terms = (y - p) ** 2
    elif loss == "logloss":
        q = np.clip(p, 1e-15, 1 - 1e-15)
        terms = -(y * np.log(q) + (1 - y) * np.log(1 - q))
    else:
        raise ConfigError(f"unknown loss {loss!r}")
    return float(np.sum(w * terms) / len(y))


def stratified_folds(y, k, seed=0) -> np.ndarray:
    """Fold id per row.

    Rows of each class are shuffled and dealt round-robin, continuing the
    deal across classes, so every fold holds floor or ceil of n_class/k rows
    of each class.
    """
    y = np.asarray(y)
    n = len(y)
    if k < 2 or k > n:
        raise DataError(f"cannot make {k} folds from {n} rows")
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=np.int64)
    offset = 0
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        folds[idx] = (offset + np.arange(len(idx))) % k
        offset += len(idx)
    return folds


@dataclass(frozen=True)
class CVResult:
    auroc_mean: float
    auroc_std: float
    brier_mean: float
    brier_std: float
    fold_auroc: np.ndarray
    fold_brier: np.ndarray
    oof: np.ndarray  # out-of-fold predicted probabilities
    folds: np.ndarray


def kfold_cv(data: Dataset, spec: LearnerSpec, w=None, k=5, seed=0) -> CVResult:
    """Stratified k-fold CV. Training-fold weights are renormalized to mean one.

    Folds whose held-out part has a single class get a NaN AUROC; if every
    fold is like that (e.g. leave-one-out) the pooled out-of-fold AUROC is
    reported instead.
    """
    folds = stratified_folds(data.y, k, seed)
    wv = None if w is None else np.asarray(w, dtype=np.float64)
    oof = np.empty(data.n)
    fa, fb = np.full(k, np.nan), np.full(k, np.nan)
    for f in range(k):
        te = folds == f
        tr = ~te
        model = learners.fit(spec, data.X[tr], data.y[tr], None if wv is None else wv[tr])
        p = model.predict_proba(data.X[te])
        oof[te] = p
        yt = data.y[te]
        if 0 < yt.sum() < len(yt):
            fa[f] = auroc(p, yt)
        fb[f] = brier(p, yt)
    if np.all(np.isnan(fa)):
        a_mean, a_std = auroc(oof, data.y), float("nan")
    else:
        a_mean, a_std = float(np.nanmean(fa)), float(np.nanstd(fa))
    return CVResult(a_mean, a_std, float(fb.mean()), float(fb.std()), fa, fb, oof, folds)


def expand_grid(grid) -> list[dict]:
    """A list of dicts passes through; a dict of lists becomes its product in key order."""
    if isinstance(grid, Mapping):
        keys = list(grid)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]
    return [dict(g) for g in grid]


@dataclass(frozen=True)
class GridSearchResult:
    best_params: dict
    best_index: int
    candidates: list
    mean_auroc: np.ndarray
    cv: list = field(repr=False)
    k: int = 5
    seed: int = 0

    @property
    def best_cv(self) -> CVResult:
        return self.cv[self.best_index]


def grid_search(data: Dataset, family: str, grid, k=5, seed=0, w=None, base_params=None, learner_seed=None):
    """Exhaustive CV over ``grid``; the highest mean AUROC wins, earliest candidate on ties."""
    candidates = expand_grid(grid)
    if not candidates:
        raise ConfigError("empty hyperparameter grid")
    base = dict(base_params or {})
    lseed = seed if learner_seed is None else learner_seed
    results = []
    for params in candidates:
        spec = LearnerSpec(family, {**base, **params}, lseed)
        results.append(kfold_cv(data, spec, w, k, seed))
    means = np.array([r.auroc_mean for r in results])
    best = int(np.argmax(np.where(np.isnan(means), -np.inf, means)))
    return GridSearchResult({**base, **candidates[best]}, best, candidates, means, results, k, seed)


def _metric_fn(metric) -> tuple[Callable, bool]:
    if callable(metric):
        return metric, getattr(metric, "__name__", "") == "auroc"
    if metric not in METRICS:
        raise ConfigError(f"unknown metric {metric!r}")
    return METRICS[metric], metric == "auroc"


def bootstrap_interval(scores, labels, metric="auroc", n_boot=1000, level=0.95, seed=0, max_redraw=10):
    """Percentile bootstrap over (score, label) pairs.

    Each replicate draws ``rng.integers(0, n, n)``.  For AUROC a draw lacking a
    class is redrawn, at most ``max_redraw`` times in a row.  The interval is
    widened, if needed, to contain the full-sample estimate.
    """
    fn, needs_both = _metric_fn(metric)
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n = len(labels)
    point = fn(scores, labels)
    rng = np.random.default_rng(seed)
    stats = np.empty(n_boot)
    for b in range(n_boot):
        for _ in range(max_redraw + 1):
            idx = rng.integers(0, n, n)
            yb = labels[idx]
            if not needs_both or 0 < yb.sum() < n:
                break
        else:
            raise DataError("bootstrap resamples keep missing a class")
        stats[b] = fn(scores[idx], yb)
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(stats, [a, 1.0 - a])
    return float(min(lo, point)), float(max(hi, point))


@dataclass(frozen=True)
class EvalReport:
    model: str
    correction: str
    auroc: float
    auroc_interval: tuple
    brier: float
    brier_interval: tuple
    n_test: int
    interval_mode: str = "bootstrap"

    def __post_init__(self):
        for name in ("auroc", "brier"):
            point = getattr(self, name)
            lo, hi = getattr(self, name + "_interval")
            if not (np.isnan(point) or lo <= point <= hi):
                raise DataError(f"{name} interval [{lo}, {hi}] does not contain {point}")

    def row(self) -> list:
        f = "{:.6f}".format
        return [
            self.model,
            self.correction,
            f(self.auroc),
            f(self.auroc_interval[0]),
            f(self.auroc_interval[1]),
            f(self.brier),
            f(self.brier_interval[0]),
            f(self.brier_interval[1]),
            str(self.n_test),
        ]


def evaluate(model, test: Dataset, family: str, correction: str, n_boot=1000, seed=0) -> EvalReport:
    """Test-set AUROC and Brier with percentile-bootstrap intervals."""
    p = model.predict_proba(test.X)
    return EvalReport(
        family,
        correction,
        auroc(p, test.y),
        bootstrap_interval(p, test.y, "auroc", n_boot, seed=seed),
        brier(p, test.y),
        bootstrap_interval(p, test.y, "brier", n_boot, seed=seed),
        test.n,
    )


def write_reports(reports: Sequence[EvalReport], path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow(r.row())


def read_reports(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
