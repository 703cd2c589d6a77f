"""Density ratios from a train-vs-test probabilistic classifier.

With s = 1 for test rows, r(x) = p(s=1|x) / (1 - p(s=1|x)), optionally times
n_train / n_test.  Probabilities for the training rows are out-of-fold
predictions of the CV-selected candidate, so no row is scored by a model
that saw it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import as_2d
from .weights import RAW, Weights, normalize_weights
from ..data import Dataset
from ..exceptions import ConfigError, DataError

KINDS = {"logistic_elastic_net": "logistic", "random_forest": "random_forest"}

DEFAULT_GRIDS = {
    "logistic_elastic_net": {"l1": [0.0, 1e-3, 1e-2, 1e-1], "l2": [0.0, 1e-3, 1e-2, 1e-1]},
    # large leaves keep out-of-fold probabilities smooth enough for odds
    "random_forest": {"min_samples_leaf": [150]},
}
DEFAULT_BASE = {
    "logistic_elastic_net": {},
    "random_forest": {"n_trees": 50},
}


@dataclass(frozen=True)
class ClassifierRatioConfig:
    kind: str = "logistic_elastic_net"
    grid: object = None  # None -> DEFAULT_GRIDS[kind]
    base_params: dict | None = None
    p_max: float = 0.99
    prior_correction: bool = False
    cv_folds: int = 5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown classifier kind {self.kind!r}")
        if not 0.5 < self.p_max < 1.0:
            raise ConfigError("p_max must lie in (0.5, 1)")


def odds_ratio(p, p_max=0.99, prior_factor=1.0):
    """Clip probabilities to [1 - p_max, p_max] and return prior_factor * p / (1 - p)."""
    p = np.clip(np.asarray(p, dtype=np.float64), 1.0 - p_max, p_max)
    return prior_factor * p / (1.0 - p)


def classifier_weights(train_X, test_X, cfg: ClassifierRatioConfig | None = None, seed=0, normalize=True) -> Weights:
    from ..evaluation import grid_search

    cfg = cfg or ClassifierRatioConfig()
    train_X, test_X = as_2d(train_X), as_2d(test_X)
    if train_X.shape[1] != test_X.shape[1]:
        raise DataError("train and test have different dimensionality")
    n_tr, n_te = len(train_X), len(test_X)
    X = np.vstack([train_X, test_X])
    s = np.r_[np.zeros(n_tr, dtype=np.int64), np.ones(n_te, dtype=np.int64)]
    names = tuple(f"x{j}" for j in range(X.shape[1]))
    pooled = Dataset(X, s, names)
    grid = DEFAULT_GRIDS[cfg.kind] if cfg.grid is None else cfg.grid
    base = DEFAULT_BASE[cfg.kind] if cfg.base_params is None else cfg.base_params
    gs = grid_search(pooled, KINDS[cfg.kind], grid, k=cfg.cv_folds, seed=seed, base_params=base)
    p = gs.best_cv.oof[:n_tr]
    factor = n_tr / n_te if cfg.prior_correction else 1.0
    info = {
        "method": f"classifier_{cfg.kind}",
        "params": gs.best_params,
        "cv_auroc": gs.mean_auroc.tolist(),
        "p_max": cfg.p_max,
        "prior_correction": cfg.prior_correction,
    }
    w = Weights(odds_ratio(p, cfg.p_max, factor), RAW, info)
    return normalize_weights(w) if normalize else w
