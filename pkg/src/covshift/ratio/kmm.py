"""Kernel mean matching."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import as_2d, median_heuristic_bandwidth, rbf_kernel
from .qp import solve_qp
from .weights import RAW, Weights, normalize_weights
from ..exceptions import ConfigError, DataError


@dataclass(frozen=True)
class KMMConfig:
    """``sigma=None`` selects the median heuristic on pooled train+test rows;
    ``eps=None`` selects (sqrt(n) - 1) / sqrt(n).

    ``ridge`` adds ``ridge/2 * ||w - 1||^2`` to the objective.  The plain RBF
    Gram matrix is numerically singular, which leaves the weights along its
    null space arbitrary; the penalty makes the minimizer unique and pulls
    those directions toward uniform weights rather than toward zero.
    """

    sigma: float | None = None
    B: float = 1000.0
    eps: float | None = None
    ridge: float = 1.0
    tol: float = 1e-6
    max_iter: int = 50_000
    seed: int = 0

    def __post_init__(self):
        if self.sigma is not None and not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        if not self.B > 1:
            raise ConfigError("B must exceed 1")
        if self.eps is not None and self.eps < 0:
            raise ConfigError("eps must be nonnegative")
        if self.ridge < 0:
            raise ConfigError("ridge must be nonnegative")


def kmm_problem(train_X, test_X, sigma):
    """Gram matrix and linear term of the KMM quadratic program."""
    n_tr, n_te = len(train_X), len(test_X)
    K = rbf_kernel(train_X, train_X, sigma)
    kappa = (n_tr / n_te) * rbf_kernel(train_X, test_X, sigma).sum(axis=1)
    return K, kappa


def kmm_weights(train_X, test_X, cfg: KMMConfig | None = None, normalize=True) -> Weights:
    cfg = cfg or KMMConfig()
    train_X, test_X = as_2d(train_X), as_2d(test_X)
    if len(train_X) == 0 or len(test_X) == 0:
        raise DataError("KMM needs nonempty train and test sets")
    if train_X.shape[1] != test_X.shape[1]:
        raise DataError("train and test have different dimensionality")
    n = len(train_X)
    sigma = cfg.sigma
    if sigma is None:
        sigma = median_heuristic_bandwidth(np.vstack([train_X, test_X]), seed=cfg.seed)
    eps = cfg.eps if cfg.eps is not None else (np.sqrt(n) - 1.0) / np.sqrt(n)
    K, kappa = kmm_problem(train_X, test_X, sigma)
    K[np.diag_indices(n)] += cfg.ridge
    res = solve_qp(K, kappa + cfg.ridge, 0.0, cfg.B, (n * (1 - eps), n * (1 + eps)), tol=cfg.tol, max_iter=cfg.max_iter)
    info = {
        "method": "kmm",
        "sigma": sigma,
        "B": cfg.B,
        "eps": eps,
        "ridge": cfg.ridge,
        "converged": res.converged,
        "n_iter": res.n_iter,
        "stationarity": res.stationarity,
        "objective": res.objective,
    }
    w = Weights(np.maximum(res.x, 0.0), RAW, info)
    return normalize_weights(w) if normalize else w
