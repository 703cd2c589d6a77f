"""Train/test splits with covariate, prior or concept shift.

``spectral_split`` mimics covariate shift on real data by clustering two
features; the synthetic generators draw train and test sets from known
Gaussian mixtures so the true density ratio is available in closed form.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.stats import multivariate_normal
from sklearn.cluster import KMeans

from . import learners
from ._seeding import child_rng, child_seed
from .data import Dataset
from .evaluation import stratified_folds
from .exceptions import ConfigError, DataError, DegenerateSplitError, NumericalError
from .learners import LearnerSpec
from .learners.base import sigmoid
from .ratio.kernels import median_heuristic_bandwidth, rbf_kernel

PROVENANCE = ("spectral", "synthetic", "prior_shift", "concept_shift", "random", "provided")


@dataclass(frozen=True)
class SplitAssignment:
    train_indices: np.ndarray
    test_indices: np.ndarray
    provenance: str = "provided"

    def __post_init__(self):
        tr = np.asarray(self.train_indices, dtype=np.int64)
        te = np.asarray(self.test_indices, dtype=np.int64)
        if tr.size == 0 or te.size == 0:
            raise DegenerateSplitError("train and test must both be nonempty")
        if np.intersect1d(tr, te).size:
            raise DataError("train and test indices overlap")
        if self.provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "train_indices", tr)
        object.__setattr__(self, "test_indices", te)

    def apply(self, data: Dataset) -> tuple[Dataset, Dataset]:
        if max(self.train_indices.max(), self.test_indices.max()) >= data.n:
            raise DataError("split refers to rows beyond the dataset")
        return data.subset(self.train_indices), data.subset(self.test_indices)

    def to_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "set"])
            rows = [(int(i), "train") for i in self.train_indices] + [(int(i), "test") for i in self.test_indices]
            w.writerows(sorted(rows))

    @classmethod
    def from_csv(cls, path, provenance="provided") -> SplitAssignment:
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        bad = {r["set"] for r in rows} - {"train", "test"}
        if bad:
            raise DataError(f"split file has unknown set label(s) {sorted(bad)}")
        tr = [int(r["row"]) for r in rows if r["set"] == "train"]
        te = [int(r["row"]) for r in rows if r["set"] == "test"]
        return cls(np.array(tr), np.array(te), provenance)


# ---------------------------------------------------------------------------
# synthetic distributions


@dataclass(frozen=True)
class GaussianMixture:
    weights: tuple
    means: tuple
    covs: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError("mixture weights must be nonnegative and sum to 1")
        means = [np.atleast_1d(np.asarray(m, dtype=np.float64)) for m in self.means]
        d = means[0].size
        covs = []
        for c in self.covs:
            c = np.asarray(c, dtype=np.float64)
            c = c * np.eye(d) if c.ndim == 0 else (np.diag(c) if c.ndim == 1 else c)
            if c.shape != (d, d) or not np.allclose(c, c.T):
                raise ConfigError("covariances must be symmetric d x d")
            if np.linalg.eigvalsh(c).min() <= 0:
                raise ConfigError("covariances must be positive definite")
            covs.append(c)
        if len(means) != len(w) or len(covs) != len(w) or any(m.size != d for m in means):
            raise ConfigError("mixture components disagree in count or dimension")
        object.__setattr__(self, "weights", tuple(w))
        object.__setattr__(self, "means", tuple(means))
        object.__setattr__(self, "covs", tuple(covs))

    @classmethod
    def gaussian(cls, mean, cov) -> GaussianMixture:
        return cls((1.0,), (mean,), (cov,))

    @property
    def dim(self) -> int:
        return self.means[0].size

    def pdf(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.dim)
        out = np.zeros(len(X))
        for w, m, c in zip(self.weights, self.means, self.covs):
            out += w * multivariate_normal(m, c).pdf(X).reshape(-1)
        return out

    def sample(self, n, rng) -> np.ndarray:
        comp = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        X = np.empty((n, self.dim))
        for k, (m, c) in enumerate(zip(self.means, self.covs)):
            idx = np.flatnonzero(comp == k)
            X[idx] = rng.multivariate_normal(m, c, size=idx.size, method="cholesky")
        return X

    def to_dict(self):
        return {
            "weights": list(self.weights),
            "means": [m.tolist() for m in self.means],
            "covs": [c.tolist() for c in self.covs],
        }

    @classmethod
    def from_dict(cls, d) -> GaussianMixture:
        return cls(tuple(d["weights"]), tuple(d["means"]), tuple(d["covs"]))


@dataclass(frozen=True)
class LabelModel:
    """P(y=1|x) = sigmoid((intercept + linear.x + cubic.x^3) / noise)."""

    linear: tuple
    cubic: tuple = ()
    intercept: float = 0.0
    noise: float = 1.0

    def __post_init__(self):
        if not self.noise > 0:
            raise ConfigError("label noise must be positive")

    def logit(self, X):
        X = np.asarray(X, dtype=np.float64)
        z = self.intercept + X @ np.asarray(self.linear, dtype=np.float64)
        if self.cubic:
            z = z + (X**3) @ np.asarray(self.cubic, dtype=np.float64)
        return z / self.noise

    def prob(self, X):
        return sigmoid(self.logit(X))

    def to_dict(self):
        return {"linear": list(self.linear), "cubic": list(self.cubic), "intercept": self.intercept, "noise": self.noise}

    @classmethod
    def from_dict(cls, d) -> LabelModel:
        return cls(tuple(d["linear"]), tuple(d.get("cubic", ())), float(d.get("intercept", 0.0)), float(d.get("noise", 1.0)))


@dataclass(frozen=True)
class SyntheticShiftSpec:
    train: GaussianMixture
    test: GaussianMixture
    labels: LabelModel
    seed: int = 0
    feature_names: tuple = field(default=())

    def __post_init__(self):
        if self.train.dim != self.test.dim:
            raise ConfigError("train and test distributions differ in dimension")
        if len(self.labels.linear) != self.train.dim or (self.labels.cubic and len(self.labels.cubic) != self.train.dim):
            raise ConfigError("label model coefficients do not match the dimension")
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(self.train.dim))
        object.__setattr__(self, "feature_names", names)

    @property
    def dim(self):
        return self.train.dim

    def to_dict(self):
        return {
            "train": self.train.to_dict(),
            "test": self.test.to_dict(),
            "labels": self.labels.to_dict(),
            "seed": self.seed,
            "feature_names": list(self.feature_names),
        }

    @classmethod
    def from_dict(cls, d) -> SyntheticShiftSpec:
        return cls(
            GaussianMixture.from_dict(d["train"]),
            GaussianMixture.from_dict(d["test"]),
            LabelModel.from_dict(d["labels"]),
            int(d.get("seed", 0)),
            tuple(d.get("feature_names", ())),
        )


def default_benchmark(seed=0) -> SyntheticShiftSpec:
    """Train N(0, I), test N((1, 1), 0.5 I), P(y=1|x) = sigmoid(x1^3 - x1 - x2).

    A linear model is misspecified for this label function, and the best
    linear direction differs between the train and test regions, so
    importance weighting changes which direction is learned.
    """
    return SyntheticShiftSpec(
        GaussianMixture.gaussian([0.0, 0.0], np.eye(2)),
        GaussianMixture.gaussian([1.0, 1.0], 0.5 * np.eye(2)),
        LabelModel((-1.0, -1.0), (1.0, 0.0)),
        seed,
    )


def no_shift_benchmark(seed=0) -> SyntheticShiftSpec:
    spec = default_benchmark(seed)
    return SyntheticShiftSpec(spec.train, spec.train, spec.labels, seed)


def gaussian_1d_shift(shift=1.0, test_scale=1.0, seed=0) -> SyntheticShiftSpec:
    """Train N(0, 1), test N(shift, test_scale^2), labels sigmoid(x)."""
    return SyntheticShiftSpec(
        GaussianMixture.gaussian([0.0], [[1.0]]),
        GaussianMixture.gaussian([shift], [[test_scale**2]]),
        LabelModel((1.0,)),
        seed,
    )


def make_synthetic_shift(spec: SyntheticShiftSpec, n_train, n_test, seed=None) -> tuple[Dataset, Dataset]:
    """Draw train rows from ``spec.train`` and test rows from ``spec.test``;
    both are labeled by the same ``spec.labels``."""
    seed = spec.seed if seed is None else seed
    rng_tr = child_rng(seed, "synthetic", "train")
    rng_te = child_rng(seed, "synthetic", "test")
    X_tr = spec.train.sample(n_train, rng_tr)
    X_te = spec.test.sample(n_test, rng_te)
    y_tr = (rng_tr.random(n_train) < spec.labels.prob(X_tr)).astype(np.int64)
    y_te = (rng_te.random(n_test) < spec.labels.prob(X_te)).astype(np.int64)
    names = spec.feature_names
    return Dataset(X_tr, y_tr, names), Dataset(X_te, y_te, names)


def true_density_ratio(x, spec: SyntheticShiftSpec) -> np.ndarray:
    """p_test(x) / p_train(x), vectorized over rows."""
    p_tr = spec.train.pdf(x)
    if np.any(p_tr <= 0):
        raise DataError("training density is zero at a query point")
    return spec.test.pdf(x) / p_tr


def true_relative_ratio(x, spec: SyntheticShiftSpec, alpha) -> np.ndarray:
    """p_test / (alpha p_test + (1 - alpha) p_train)."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    p_te = spec.test.pdf(x)
    denom = alpha * p_te + (1.0 - alpha) * spec.train.pdf(x)
    if np.any(denom <= 0):
        raise DataError("mixture density is zero at a query point")
    return p_te / denom


# ---------------------------------------------------------------------------
# splits of an existing dataset


def spectral_split(data: Dataset, feature_pair=("sbp", "dbp"), k=2, bandwidth=None, seed=0, min_cluster=10) -> SplitAssignment:
    """Cluster rows on two z-scored features; the largest cluster is the training set.

    RBF affinity (median-heuristic bandwidth unless given) ->
    D^-1/2 A D^-1/2 -> top-k eigenvectors (the bottom of the normalized
    Laplacian) -> unit-norm rows -> k-means.  For k > 2 every cluster other
    than the largest goes to test.  Ties in size go to the cluster whose
    centroid has the smaller norm in z-scored space.
    """
    cols = [data.feature_index(f) for f in feature_pair]
    if data.n < 2 * k:
        raise DegenerateSplitError(f"need at least {2 * k} rows for {k} clusters")
    Z = data.X[:, cols]
    std = Z.std(axis=0, ddof=1)
    if np.any(std == 0):
        raise DegenerateSplitError("a split feature is constant; nothing to cluster")
    Z = (Z - Z.mean(axis=0)) / std
    sigma = bandwidth
    if sigma is None:
        try:
            sigma = median_heuristic_bandwidth(Z, seed=seed)
        except DataError as e:
            raise DegenerateSplitError(str(e)) from None
    A = rbf_kernel(Z, Z, sigma)
    np.fill_diagonal(A, 0.0)
    deg = A.sum(axis=1)
    if np.any(deg <= 0):
        raise DegenerateSplitError("isolated points in the affinity graph; increase the bandwidth")
    s = 1.0 / np.sqrt(deg)
    M = s[:, None] * A * s[None, :]
    n = data.n
    try:
        _, vecs = scipy.linalg.eigh(M, subset_by_index=[n - k, n - 1])
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"eigen-solver failed: {e}") from None
    emb = vecs / np.maximum(np.linalg.norm(vecs, axis=1, keepdims=True), 1e-300)
    km = KMeans(n_clusters=k, n_init=10, random_state=child_seed(seed, "kmeans"))
    labels = km.fit_predict(emb)
    sizes = np.bincount(labels, minlength=k)
    if sizes.min() < min_cluster:
        raise DegenerateSplitError(f"a cluster has only {sizes.min()} members")
    cnorm = np.array([np.linalg.norm(Z[labels == c].mean(axis=0)) for c in range(k)])
    order = sorted(range(k), key=lambda c: (-sizes[c], cnorm[c]))
    train_c = order[0]
    return SplitAssignment(np.flatnonzero(labels == train_c), np.flatnonzero(labels != train_c), "spectral")


def rf_feature_importance_screen(data: Dataset, cv_folds=5, seed=0, params=None) -> np.ndarray:
    """Random-forest impurity importances averaged over CV training folds, summing to 1."""
    spec = LearnerSpec("random_forest", params or {}, seed)
    if data.d == 1:
        return np.ones(1)
    folds = stratified_folds(data.y, cv_folds, seed)
    total = np.zeros(data.d)
    for f in range(cv_folds):
        tr = folds != f
        model = learners.fit(spec, data.X[tr], data.y[tr])
        if isinstance(model, learners.ForestModel):
            total += model.feature_importance()
        else:
            total += 1.0 / data.d
    return total / total.sum()


def make_prior_shift(data: Dataset, target_positive_rate, seed=0, n_test=None) -> SplitAssignment:
    """Hold out ``n_test`` rows (default 15%) with the requested positive rate.

    Rows are sampled without replacement within each class, so within-class
    covariate distributions are untouched.
    """
    n_test = int(round(0.15 * data.n)) if n_test is None else int(n_test)
    if not 0 < n_test < data.n:
        raise DataError("n_test must be between 1 and n - 1")
    if not 0.0 <= target_positive_rate <= 1.0:
        raise DataError("target positive rate must lie in [0, 1]")
    n_pos_test = int(round(target_positive_rate * n_test))
    pos = np.flatnonzero(data.y == 1)
    neg = np.flatnonzero(data.y == 0)
    if n_pos_test > len(pos) or n_test - n_pos_test > len(neg):
        raise DataError(f"cannot draw {n_pos_test} positives and {n_test - n_pos_test} negatives")
    rng = child_rng(seed, "prior_shift")
    te = np.concatenate([rng.choice(pos, n_pos_test, replace=False), rng.choice(neg, n_test - n_pos_test, replace=False)])
    te = np.sort(te)
    tr = np.setdiff1d(np.arange(data.n), te)
    return SplitAssignment(tr, te, "prior_shift")


def make_concept_shift(data: Dataset, seed=0) -> Dataset:
    """Same covariates, labels redrawn as Bernoulli(original positive rate)."""
    rng = child_rng(seed, "concept_shift")
    y = (rng.random(data.n) < data.positive_rate).astype(np.int64)
    return data.with_labels(y)


def random_split(data: Dataset, test_fraction=0.3, seed=0) -> SplitAssignment:
    rng = child_rng(seed, "random_split")
    perm = rng.permutation(data.n)
    n_te = int(round(test_fraction * data.n))
    return SplitAssignment(np.sort(perm[n_te:]), np.sort(perm[:n_te]), "random")
