import numpy as np
from scipy.spatial.distance import cdist, pdist

from ..exceptions import DataError


def as_2d(X):
    """Float matrix view; a 1-D array is treated as one column."""
    X = np.asarray(X, dtype=np.float64)
    return X[:, None] if X.ndim == 1 else X


def median_heuristic_bandwidth(X, max_rows=2000, seed=0):
    """Median pairwise Euclidean distance, on at most ``max_rows`` rows."""
    X = as_2d(X)
    if X.shape[0] < 2:
        raise DataError("median heuristic needs at least two points")
    if X.shape[0] > max_rows:
        rows = np.random.default_rng(seed).choice(X.shape[0], max_rows, replace=False)
        X = X[np.sort(rows)]
    med = float(np.median(pdist(X)))
    if not med > 0:
        raise DataError("median pairwise distance is zero (points identical)")
    return med


def rbf_kernel(A, B, sigma):
    """exp(-||a - b||^2 / (2 sigma^2))."""
    A, B = as_2d(A), as_2d(B)
    return np.exp(-cdist(A, B, "sqeuclidean") / (2.0 * sigma * sigma))
