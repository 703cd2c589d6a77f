"""Random forest with sample weights entering the node statistics.

Tree structure (split feature and threshold) is grown by scikit-learn's
best-split CART builder with the Gini criterion.  Leaf probabilities, node
weights and impurity importances are recomputed here from the fitted
weights, and prediction walks the stored arrays directly, so a model
round-trips through plain arrays.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.tree import DecisionTreeClassifier

from .base import Model, default_max_features
from .._seeding import child_rng, child_seed
from ..data import NormStats

LEAF = -1


@dataclass(frozen=True, eq=False)
class Tree:
    """Binary tree in array form; node 0 is the root.

    Rows go left when ``x[feature] <= threshold``.  Features are compared in
    float32, matching how the splits were searched.
    """

    left: np.ndarray
    right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray  # weighted positive fraction per node
    weight: np.ndarray | None = None  # total training weight per node

    @property
    def n_nodes(self):
        return len(self.left)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float32).astype(np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.left[node] != LEAF)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.left[node[active]] != LEAF]
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def impurity_decrease(self, n_features) -> np.ndarray:
        """Weighted Gini decrease per feature, as a fraction of root weight."""
        out = np.zeros(n_features)
        if self.weight is None or self.weight[0] <= 0:
            return out
        gini = 2.0 * self.value * (1.0 - self.value)
        internal = np.flatnonzero(self.left != LEAF)
        l, r = self.left[internal], self.right[internal]
        dec = (
            self.weight[internal] * gini[internal]
            - self.weight[l] * gini[l]
            - self.weight[r] * gini[r]
        )
        np.add.at(out, self.feature[internal], dec)
        return out / self.weight[0]

    def same_structure(self, other: Tree) -> bool:
        return (
            np.array_equal(self.left, other.left)
            and np.array_equal(self.right, other.right)
            and np.array_equal(self.feature, other.feature)
            and np.array_equal(self.threshold, other.threshold)
        )


def _node_stats(left, right, leaf_ids, y, w):
    """Bottom-up weighted totals and positive fractions for every node."""
    n_nodes = len(left)
    tot = np.bincount(leaf_ids, weights=w, minlength=n_nodes)
    pos = np.bincount(leaf_ids, weights=w * y, minlength=n_nodes)
    # children always have larger ids than their parent
    for node in range(n_nodes - 1, -1, -1):
        if left[node] != LEAF:
            tot[node] = tot[left[node]] + tot[right[node]]
            pos[node] = pos[left[node]] + pos[right[node]]
    with np.errstate(invalid="ignore", divide="ignore"):
        value = np.where(tot > 0, pos / tot, 0.0)
    return value, tot


def _quantize(w):
    # Integer-valued split weights make sklearn's impurity sums exact, so the grown
    # structure is invariant to the overall weight scale and to row duplication.
    scale = min(2.0**20 / w.min(), 2.0**40 / w.max())
    return np.maximum(np.round(w * scale), 1.0)


def grow_tree(X, y, w, max_depth=None, min_samples_leaf=1, max_features=None, seed=0) -> Tree:
    """One weighted CART tree on all given rows (no resampling)."""
    keep = w > 0
    X, y, w = X[keep], y[keep], w[keep]
    if not (isinstance(min_samples_leaf, float) and min_samples_leaf < 1):
        min_samples_leaf = int(min_samples_leaf)
    sk = DecisionTreeClassifier(
        criterion="gini",
        splitter="best",
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
        max_features=max_features,
        random_state=seed,
    )
    # sklearn breaks ties between equally good splits by its feature visiting order,
    # so present columns in an order fixed by their contents, not their position
    order = np.array(sorted(range(X.shape[1]), key=lambda j: X[:, j].tobytes()), dtype=np.int64)
    Xo = np.ascontiguousarray(X[:, order])
    sk.fit(Xo, y, sample_weight=_quantize(w))
    t = sk.tree_
    left = t.children_left.astype(np.int64)
    right = t.children_right.astype(np.int64)
    feature = np.where(left == LEAF, 0, order[np.maximum(t.feature, 0)]).astype(np.int64)
    threshold = np.where(left == LEAF, 0.0, t.threshold)
    value, tot = _node_stats(left, right, sk.apply(Xo).astype(np.int64), y.astype(np.float64), w)
    return Tree(left, right, feature, threshold, value, tot)


@dataclass(frozen=True, eq=False)
class ForestModel(Model):
    trees: tuple
    n_features: int
    norm_stats: NormStats | None = None
    family: str = "random_forest"
    warning: str | None = None

    def _proba(self, X):
        acc = np.zeros(len(X))
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)

    def feature_importance(self) -> np.ndarray:
        total = np.zeros(self.n_features)
        for tree in self.trees:
            total += tree.impurity_decrease(self.n_features)
        s = total.sum()
        if s <= 0:
            return np.full(self.n_features, 1.0 / self.n_features)
        return total / s


def _fit_one(i, X, y, w, p, max_features, seed):
    tree_seed = child_seed(seed, "tree", i)
    wi = w
    if p["bootstrap"]:
        rng = child_rng(seed, "bootstrap", i)
        counts = np.bincount(rng.integers(0, len(y), len(y)), minlength=len(y))
        wi = w * counts
    return grow_tree(X, y, wi, p["max_depth"], p["min_samples_leaf"], max_features, tree_seed)


def fit_forest(X, y, w, p, seed) -> ForestModel:
    d = X.shape[1]
    mf = p["max_features"]
    max_features = default_max_features(d) if mf is None else min(int(mf), d)
    y = y.astype(np.int64)
    n_jobs = int(p.get("n_jobs") or 1)
    idx = range(p["n_trees"])
    if n_jobs > 1:
        # the tree builder releases the GIL
        with ThreadPoolExecutor(n_jobs) as ex:
            trees = list(ex.map(lambda i: _fit_one(i, X, y, w, p, max_features, seed), idx))
    else:
        trees = [_fit_one(i, X, y, w, p, max_features, seed) for i in idx]
    return ForestModel(tuple(trees), d)
