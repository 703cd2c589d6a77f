"""Relative unconstrained least-squares importance fitting.

Fits r_alpha(x) = p_te(x) / (alpha p_te(x) + (1 - alpha) p_tr(x)) with a
Gaussian basis centred on test points; the ridge-regularized solution is
closed form.  Bandwidth and ridge penalty are picked by K-fold CV on the
squared-loss objective.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .kernels import as_2d, median_heuristic_bandwidth, rbf_kernel
from .weights import RAW, Weights, normalize_weights
from ..exceptions import ConfigError, DataError

MIN_LAMBDA = 1e-9


@dataclass(frozen=True)
class RuLSIFConfig:
    alpha: float = 0.1
    lambdas: tuple = (1e-3, 1e-2, 1e-1, 1.0, 10.0)
    sigma_scales: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)
    sigmas: tuple | None = None  # explicit bandwidths override the scaled median
    n_centers: int = 100
    cv_folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError("alpha must lie in [0, 1)")
        if not self.lambdas or (self.sigmas is None and not self.sigma_scales) or self.sigmas == ():
            raise ConfigError("RuLSIF grids must be nonempty")
        if min(self.lambdas) < MIN_LAMBDA:
            raise ConfigError(f"ridge penalties below {MIN_LAMBDA} are not allowed")
        if self.n_centers < 1 or self.cv_folds < 2:
            raise ConfigError("need n_centers >= 1 and cv_folds >= 2")


@dataclass(frozen=True)
class RuLSIFModel:
    theta: np.ndarray
    centers: np.ndarray
    sigma: float
    alpha: float
    lam: float

    def basis(self, X):
        return rbf_kernel(X, self.centers, self.sigma)

    def ratio(self, X):
        return np.maximum(0.0, self.basis(X) @ self.theta)


def rulsif_system(phi_train, phi_test, alpha):
    """H = alpha E_te[phi phi'] + (1 - alpha) E_tr[phi phi'], h = E_te[phi]."""
    H = alpha * (phi_test.T @ phi_test) / len(phi_test)
    H += (1.0 - alpha) * (phi_train.T @ phi_train) / len(phi_train)
    h = phi_test.mean(axis=0)
    return H, h


def solve_theta(H, h, lam):
    A = H + lam * np.eye(len(h))
    return scipy.linalg.solve(A, h, assume_a="pos")


def rulsif_loss(theta, phi_train, phi_test, alpha):
    """Squared-loss objective (up to a constant) evaluated on held-out rows."""
    r_te = phi_test @ theta
    r_tr = phi_train @ theta
    return (
        0.5 * alpha * np.mean(r_te**2)
        + 0.5 * (1.0 - alpha) * np.mean(r_tr**2)
        - np.mean(r_te)
    )


def pick_centers(test_X, n_centers, seed):
    n_te = len(test_X)
    if n_centers >= n_te:
        return test_X.copy()
    rows = np.random.default_rng(seed).choice(n_te, n_centers, replace=False)
    return test_X[np.sort(rows)]


def fit_rulsif(train_X, test_X, sigma, lam, alpha=0.1, centers=None) -> RuLSIFModel:
    """Closed-form fit for fixed hyperparameters."""
    train_X, test_X = as_2d(train_X), as_2d(test_X)
    centers = test_X if centers is None else as_2d(centers)
    phi_tr = rbf_kernel(train_X, centers, sigma)
    phi_te = rbf_kernel(test_X, centers, sigma)
    H, h = rulsif_system(phi_tr, phi_te, alpha)
    return RuLSIFModel(solve_theta(H, h, lam), centers, sigma, alpha, lam)


def _fold_ids(n, k, rng):
    return rng.permutation(np.arange(n) % k)


def rulsif_select(train_X, test_X, cfg: RuLSIFConfig):
    """Cross-validated (sigma, lambda, cv score table)."""
    rng = np.random.default_rng(cfg.seed)
    centers = pick_centers(test_X, cfg.n_centers, cfg.seed)
    if cfg.sigmas is not None:
        sigmas = tuple(cfg.sigmas)
    else:
        med = median_heuristic_bandwidth(np.vstack([train_X, test_X]), seed=cfg.seed)
        sigmas = tuple(med * s for s in cfg.sigma_scales)
    k = cfg.cv_folds
    if len(train_X) < k or len(test_X) < k:
        raise DataError("fewer rows than CV folds")
    f_tr = _fold_ids(len(train_X), k, rng)
    f_te = _fold_ids(len(test_X), k, rng)
    scores = np.zeros((len(sigmas), len(cfg.lambdas)))
    for i, sigma in enumerate(sigmas):
        phi_tr = rbf_kernel(train_X, centers, sigma)
        phi_te = rbf_kernel(test_X, centers, sigma)
        for fold in range(k):
            H, h = rulsif_system(phi_tr[f_tr != fold], phi_te[f_te != fold], cfg.alpha)
            for j, lam in enumerate(cfg.lambdas):
                theta = solve_theta(H, h, lam)
                scores[i, j] += rulsif_loss(theta, phi_tr[f_tr == fold], phi_te[f_te == fold], cfg.alpha) / k
    # np.argmin keeps the first minimum: declared (sigma, lambda) order breaks ties
    i, j = np.unravel_index(np.argmin(scores), scores.shape)
    return sigmas[i], cfg.lambdas[j], centers, scores


def rulsif_weights(train_X, test_X, cfg: RuLSIFConfig | None = None, normalize=True) -> Weights:
    cfg = cfg or RuLSIFConfig()
    train_X, test_X = as_2d(train_X), as_2d(test_X)
    if len(train_X) == 0 or len(test_X) == 0:
        raise DataError("RuLSIF needs nonempty train and test sets")
    if train_X.shape[1] != test_X.shape[1]:
        raise DataError("train and test have different dimensionality")
    sigma, lam, centers, scores = rulsif_select(train_X, test_X, cfg)
    model = fit_rulsif(train_X, test_X, sigma, lam, cfg.alpha, centers)
    info = {"method": "rulsif", "alpha": cfg.alpha, "sigma": sigma, "lambda": lam, "cv_scores": scores}
    w = Weights(model.ratio(train_X), RAW, info)
    return normalize_weights(w) if normalize else w
