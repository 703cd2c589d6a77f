"""Convex QP over a box intersected with a band on the coordinate sum.

    minimize    0.5 w'Qw - c'w
    subject to  lo <= w <= hi,  s_lo <= sum(w) <= s_hi

Solved by accelerated projected gradient with a fixed 1/L step and
gradient-based momentum restart.  The projection onto the feasible set is
computed exactly (clip after a scalar shift found by bisection), so every
iterate is feasible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import InfeasibleProblemError


@dataclass(frozen=True)
class QPResult:
    x: np.ndarray
    objective: float
    converged: bool
    n_iter: int
    stationarity: float  # inf-norm of x - P(x - grad/L)


def qp_objective(Q, c, x):
    return 0.5 * float(x @ Q @ x) - float(c @ x)


def _broadcast_box(lo, hi, n):
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), (n,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), (n,)).copy()
    if np.any(lo > hi):
        raise InfeasibleProblemError("box has lo > hi")
    return lo, hi


def project_box_sum(v, lo, hi, s_lo=-np.inf, s_hi=np.inf, max_bisect=200):
    """Euclidean projection of ``v`` onto {lo <= x <= hi, s_lo <= sum(x) <= s_hi}.

    The projection has the form clip(v - tau, lo, hi) for a scalar tau, with
    tau = 0 when the clipped point already satisfies the band.
    """
    x = np.clip(v, lo, hi)
    s = x.sum()
    if s_lo <= s <= s_hi:
        return x
    if lo.sum() > s_hi or hi.sum() < s_lo:
        raise InfeasibleProblemError("sum band does not intersect the box")
    target = s_hi if s > s_hi else s_lo
    # sum(clip(v - tau)) is nonincreasing in tau
    a = float(np.min(v - hi))  # sum == hi.sum() for tau <= a
    b = float(np.max(v - lo))  # sum == lo.sum() for tau >= b
    for _ in range(max_bisect):
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        if np.clip(v - mid, lo, hi).sum() > target:
            a = mid
        else:
            b = mid
    # exact solve on the free set of the final bracket
    tau = 0.5 * (a + b)
    z = v - tau
    free = (z > lo) & (z < hi)
    if free.any():
        fixed = np.where(z <= lo, lo, hi)[~free].sum()
        tau = (v[free].sum() - (target - fixed)) / free.sum()
    x = np.clip(v - tau, lo, hi)
    return x


def _lipschitz(Q, n_iter=100, seed=0):
    n = Q.shape[0]
    v = np.random.default_rng(seed).standard_normal(n) + 1.0
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(n_iter):
        u = Q @ v
        lam_new = float(np.linalg.norm(u))
        if lam_new == 0.0:
            return 0.0
        v = u / lam_new
        if abs(lam_new - lam) <= 1e-10 * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return lam


def solve_qp(Q, c, lo, hi, sum_band=None, tol=1e-6, max_iter=50_000, x0=None):
    """Minimize 0.5 x'Qx - c'x over the box and optional sum band.

    Parameters
    ----------
    Q : (n, n) array
        Positive semidefinite; symmetrized before use.
    c : (n,) array
    lo, hi : float or (n,) array
        Box bounds.
    sum_band : (s_lo, s_hi) or None
    tol : float
        Convergence when ``stationarity <= tol * max(1, |x|_inf)``.
    max_iter : int
        Iteration cap; the best iterate is returned with ``converged=False``.

    Returns
    -------
    QPResult
    """
    Q = np.asarray(Q, dtype=np.float64)
    Q = 0.5 * (Q + Q.T)
    c = np.asarray(c, dtype=np.float64).ravel()
    n = c.size
    lo, hi = _broadcast_box(lo, hi, n)
    s_lo, s_hi = (-np.inf, np.inf) if sum_band is None else map(float, sum_band)
    if s_lo > s_hi:
        raise InfeasibleProblemError("sum band has s_lo > s_hi")

    def proj(v):
        return project_box_sum(v, lo, hi, s_lo, s_hi)

    # a 5% safety margin on the power-iteration estimate
    L = 1.05 * _lipschitz(Q)
    if L <= 0:
        L = 1.0
    step = 1.0 / L

    x = proj(np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64))
    y = x.copy()
    t = 1.0
    best_x, best_f = x, qp_objective(Q, c, x)
    stat = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = Q @ y - c
        x_new = proj(y - step * grad)
        # restart momentum when it opposes the descent direction
        if np.dot(y - x_new, x_new - x) > 0:
            t = 1.0
            y = x_new
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        x = x_new
        f = qp_objective(Q, c, x)
        if f < best_f:
            best_x, best_f = x, f
        if it % 10 == 0 or it == max_iter:
            g = Q @ x - c
            stat = float(np.max(np.abs(x - proj(x - step * g)))) * L
            if stat <= tol * max(1.0, float(np.max(np.abs(x)))):
                converged = True
                best_x, best_f = x, f
                break
    if not converged:
        g = Q @ best_x - c
        stat = float(np.max(np.abs(best_x - proj(best_x - step * g)))) * L
    return QPResult(best_x, best_f, converged, it, stat)
