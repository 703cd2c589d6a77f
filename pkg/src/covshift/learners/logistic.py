"""Elastic-net logistic regression by accelerated proximal gradient.

Objective (weights normalized to mean one)::

    (1/n) sum_i w_i logloss(y_i, b + x_i'beta) + l1 |beta|_1 + (l2/2) |beta|^2

The intercept is not penalized.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import Model, log_loss_terms, sigmoid
from ..data import NormStats


@dataclass(frozen=True, eq=False)
class LogisticModel(Model):
    coef: np.ndarray
    intercept: float
    n_features: int
    objective: float = float("nan")
    n_iter: int = 0
    converged: bool = True
    norm_stats: NormStats | None = None
    family: str = "logistic"
    warning: str | None = None

    def decision_function(self, X):
        return self._prepare(X) @ self.coef + self.intercept

    def _proba(self, X):
        return sigmoid(X @ self.coef + self.intercept)


def logistic_objective(beta, b, X, y, w, l1, l2):
    z = X @ beta + b
    return float(np.mean(w * log_loss_terms(z, y)) + l1 * np.abs(beta).sum() + 0.5 * l2 * beta @ beta)


def _smooth(theta, X, y, w, l2):
    beta, b = theta[:-1], theta[-1]
    z = X @ beta + b
    f = float(np.mean(w * log_loss_terms(z, y)) + 0.5 * l2 * beta @ beta)
    r = w * (sigmoid(z) - y) / len(y)
    grad = np.empty_like(theta)
    grad[:-1] = X.T @ r + l2 * beta
    grad[-1] = r.sum()
    return f, grad


def _prox(theta, t, l1):
    out = theta.copy()
    beta = theta[:-1]
    out[:-1] = np.sign(beta) * np.maximum(np.abs(beta) - t * l1, 0.0)
    return out


def fit_logistic(X, y, w, l1=0.0, l2=0.0, tol=1e-8, max_iter=5000):
    """FISTA with backtracking and monotone restart.

    Stops when the inf-norm of the gradient map is at most ``tol``.
    """
    n, d = X.shape
    y = y.astype(np.float64)
    theta = np.zeros(d + 1)
    mu = np.average(y, weights=w)
    theta[-1] = np.log(mu / (1 - mu))
    L = 1.0
    yk = theta.copy()
    t = 1.0
    F = logistic_objective(theta[:-1], theta[-1], X, y, w, l1, l2)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        fy, gy = _smooth(yk, X, y, w, l2)
        while True:
            cand = _prox(yk - gy / L, 1.0 / L, l1)
            diff = cand - yk
            fc, _ = _smooth(cand, X, y, w, l2)
            if fc <= fy + gy @ diff + 0.5 * L * diff @ diff + 1e-15 * abs(fy):
                break
            L *= 2.0
        gmap = L * np.max(np.abs(diff))
        Fc = fc + l1 * np.abs(cand[:-1]).sum()
        if Fc > F + 1e-14 * abs(F):
            # momentum overshot; restart from the current iterate
            t = 1.0
            yk = theta.copy()
            if gmap <= tol:
                converged = True
                break
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        yk = cand + ((t - 1.0) / t_new) * (cand - theta)
        theta, F, t = cand, Fc, t_new
        if gmap <= tol:
            converged = True
            break
    return theta[:-1].copy(), float(theta[-1]), F, it, converged
