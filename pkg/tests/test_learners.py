import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covshift.data import Dataset, fit_norm
from covshift.exceptions import ConfigError, DataError, NumericalError
from covshift.learners import (
    ConstantModel,
    ForestModel,
    LearnerSpec,
    LogisticModel,
    Tree,
    fit,
    forest_importance,
    load_model,
    logistic_coefficients,
    logistic_objective,
    mlp_loss_gradient,
    save_model,
)
from covshift.learners.forest import LEAF
from covshift.learners.mlp import unflatten

FOREST_DET = {"bootstrap": False, "max_features": 10, "n_trees": 3}


def toy(n=300, d=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    z = X @ np.linspace(1.5, -1.0, d) + 0.3
    y = (rng.random(n) < 1 / (1 + np.exp(-z))).astype(int)
    return X, y, rng


def same_forest(a, b):
    return len(a.trees) == len(b.trees) and all(
        s.same_structure(t) and np.allclose(s.value, t.value, rtol=0, atol=1e-12) for s, t in zip(a.trees, b.trees)
    )


# -- spec --------------------------------------------------------------------------


@pytest.mark.parametrize(
    "family, params",
    [
        ("logistic", {"l1": -1.0}),
        ("random_forest", {"n_trees": 0}),
        ("random_forest", {"min_samples_leaf": 1.5}),
        ("mlp", {"hidden": (4, 0)}),
        ("mlp", {"epochs": 0}),
        ("mlp", {"activation": "gelu"}),
        ("logistic", {"depth": 3}),
        ("svm", {}),
    ],
)
def test_spec_validation(family, params):
    with pytest.raises(ConfigError):
        LearnerSpec(family, params)


# -- weighting contract ------------------------------------------------------------


@pytest.mark.parametrize("family, params", [
    ("logistic", {"l2": 0.01}),
    ("random_forest", {"n_trees": 5, "max_depth": 4}),
    ("mlp", {"epochs": 3, "hidden": (4,)}),
])
@pytest.mark.parametrize("const", [1.0, 0.37, 5.0])
def test_uniform_weights_equal_unweighted(family, params, const):
    X, y, _ = toy()
    spec = LearnerSpec(family, params, seed=3)
    a = fit(spec, X, y)
    b = fit(spec, X, y, np.full(len(y), const))
    np.testing.assert_array_equal(a.predict_proba(X), b.predict_proba(X))


@pytest.mark.parametrize("family, params", [
    ("logistic", {"l1": 0.01}),
    ("random_forest", {"n_trees": 4, "max_depth": 5}),
    ("mlp", {"epochs": 3, "hidden": (5,)}),
])
def test_weight_scaling_invariance(family, params):
    X, y, rng = toy(seed=1)
    w = rng.uniform(0.2, 3.0, len(y))
    spec = LearnerSpec(family, params, seed=0)
    a = fit(spec, X, y, w)
    b = fit(spec, X, y, 4.0 * w)  # power of two: exact in floating point
    np.testing.assert_array_equal(a.predict_proba(X), b.predict_proba(X))
    c = fit(spec, X, y, 3.0 * w)
    np.testing.assert_allclose(a.predict_proba(X), c.predict_proba(X), atol=1e-6)


def test_weight_length_mismatch():
    X, y, _ = toy(20)
    with pytest.raises(DataError):
        fit(LearnerSpec("logistic"), X, y, np.ones(19))


def test_single_class_returns_constant():
    X = np.random.default_rng(0).normal(size=(10, 2))
    with pytest.warns(UserWarning, match="single class"):
        m = fit(LearnerSpec("random_forest"), X, np.ones(10, dtype=int))
    assert isinstance(m, ConstantModel) and m.warning
    np.testing.assert_array_equal(m.predict_proba(X), 1.0)
    # zero weight on every positive is also a single weighted class
    y = np.r_[np.zeros(5), np.ones(5)].astype(int)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = fit(LearnerSpec("logistic"), X, y, np.r_[np.ones(5), np.zeros(5)])
    np.testing.assert_array_equal(m.predict_proba(X), 0.0)


def test_dimension_mismatch():
    X, y, _ = toy(50)
    m = fit(LearnerSpec("logistic"), X, y)
    with pytest.raises(DataError, match="features"):
        m.predict_proba(np.zeros((3, 2)))


# -- logistic -------------------------------------------------------------------------


def test_logistic_zero_params_half():
    m = LogisticModel(np.zeros(3), 0.0, 3)
    np.testing.assert_array_equal(m.predict_proba(np.random.default_rng(0).normal(size=(5, 3))), 0.5)


def test_logistic_separable_sign():
    X = np.linspace(-2, 2, 40)[:, None]
    y = (X[:, 0] > 0).astype(int)
    m = fit(LearnerSpec("logistic", {"l1": 1e-4, "l2": 1e-4}), X, y)
    assert m.coef[0] > 0


def test_logistic_objective_is_minimal():
    X, y, rng = toy(200, 4, seed=2)
    w = rng.uniform(0.5, 2, 200)
    w = w / w.mean()
    l1, l2 = 0.01, 0.05
    m = fit(LearnerSpec("logistic", {"l1": l1, "l2": l2}), X, y, w)
    assert m.converged
    best = logistic_objective(m.coef, m.intercept, X, y, w, l1, l2)
    assert best == pytest.approx(m.objective, rel=1e-12)
    assert best <= logistic_objective(np.zeros(4), 0.0, X, y, w, l1, l2)
    for _ in range(100):
        beta, b = m.coef + rng.normal(0, 0.5, 4), m.intercept + rng.normal(0, 0.5)
        assert best <= logistic_objective(beta, b, X, y, w, l1, l2)


def test_logistic_large_l1_zeroes_coefficients():
    X, y, _ = toy()
    m = fit(LearnerSpec("logistic", {"l1": 10.0}), X, y)
    assert np.all(m.coef == 0.0)
    assert m.intercept == pytest.approx(np.log(y.mean() / (1 - y.mean())), abs=1e-6)


def test_logistic_coefficients_accessor():
    X, y, _ = toy(80)
    m = fit(LearnerSpec("logistic"), X, y)
    beta, b = logistic_coefficients(m)
    np.testing.assert_array_equal(beta, m.coef)
    beta[0] = 99.0
    assert m.coef[0] != 99.0
    with pytest.raises(TypeError):
        logistic_coefficients(fit(LearnerSpec("random_forest", {"n_trees": 2}), X, y))


# -- forest ----------------------------------------------------------------------------


def hand_tree():
    # root splits on feature 1 at 0.5; left leaf 0.2, right leaf 0.9
    return Tree(
        left=np.array([1, LEAF, LEAF]),
        right=np.array([2, LEAF, LEAF]),
        feature=np.array([1, 0, 0]),
        threshold=np.array([0.5, 0.0, 0.0]),
        value=np.array([0.55, 0.2, 0.9]),
        weight=np.array([10.0, 5.0, 5.0]),
    )


def test_hand_built_stump_trace():
    m = ForestModel((hand_tree(),), 2)
    X = np.array([[9.0, 0.5], [0.0, 0.51], [-3.0, -1.0]])
    np.testing.assert_array_equal(m.predict_proba(X), [0.2, 0.9, 0.2])


def test_pure_positive_leaf():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 0, 1, 1])
    m = fit(LearnerSpec("random_forest", {"bootstrap": False, "n_trees": 1}), X, y)
    np.testing.assert_array_equal(m.predict_proba(np.array([[2.5], [10.0], [-1.0]])), [1.0, 1.0, 0.0])


def test_duplicate_row_equals_double_weight():
    X, y, rng = toy(120, 3, seed=4)
    spec = LearnerSpec("random_forest", FOREST_DET, seed=2)
    i = 17
    w = np.ones(len(y))
    w[i] = 2.0
    a = fit(spec, X, y, w)
    b = fit(spec, np.vstack([X, X[i]]), np.r_[y, y[i]])
    assert same_forest(a, b)


def test_stump_importance_single_feature():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 3))
    y = (X[:, 1] > 0.2).astype(int)
    m = fit(LearnerSpec("random_forest", {"max_depth": 1, "n_trees": 5, "bootstrap": False, "max_features": 3}), X, y)
    np.testing.assert_allclose(forest_importance(m), [0, 1, 0])


def manual_gini_decrease(tree, X, y, w, d):
    """Walk each row through the tree in Python and accumulate weighted Gini per node."""
    n_nodes = len(tree.left)
    tot, pos = np.zeros(n_nodes), np.zeros(n_nodes)
    for x, yi, wi in zip(X, y, w):
        node = 0
        while True:
            tot[node] += wi
            pos[node] += wi * yi
            if tree.left[node] == LEAF:
                break
            node = tree.left[node] if np.float32(x[tree.feature[node]]) <= tree.threshold[node] else tree.right[node]
    gini = np.array([2 * (p / t) * (1 - p / t) if t > 0 else 0.0 for p, t in zip(pos, tot)])
    out = np.zeros(d)
    for node in range(n_nodes):
        if tree.left[node] != LEAF:
            l, r = tree.left[node], tree.right[node]
            out[tree.feature[node]] += tot[node] * gini[node] - tot[l] * gini[l] - tot[r] * gini[r]
    return out


def test_importance_matches_manual_gini():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(60, 2))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0.5)).astype(int)
    w = rng.uniform(0.5, 2.0, 60)
    w = w / w.mean()
    m = fit(LearnerSpec("random_forest", {"n_trees": 1, "bootstrap": False, "max_depth": 3, "max_features": 2}), X, y, w)
    dec = manual_gini_decrease(m.trees[0], X, y, w, 2)
    np.testing.assert_allclose(forest_importance(m), dec / dec.sum(), atol=1e-12)
    assert forest_importance(m).sum() == pytest.approx(1.0, abs=1e-9)


def test_forest_column_permutation_invariance():
    X, y, _ = toy(200, 4, seed=6)
    perm = np.array([2, 0, 3, 1])
    spec = LearnerSpec("random_forest", {"bootstrap": False, "max_features": 4, "n_trees": 2}, seed=0)
    a = fit(spec, X, y)
    b = fit(spec, X[:, perm], y)
    Xq = np.random.default_rng(1).normal(size=(100, 4))
    np.testing.assert_array_equal(a.predict_proba(Xq), b.predict_proba(Xq[:, perm]))


def test_forest_fractional_leaf_and_threads():
    X, y, _ = toy(300)
    a = fit(LearnerSpec("random_forest", {"n_trees": 6, "min_samples_leaf": 0.1}, seed=1), X, y)
    b = fit(LearnerSpec("random_forest", {"n_trees": 6, "min_samples_leaf": 0.1, "n_jobs": 3}, seed=1), X, y)
    assert same_forest(a, b)


def test_forest_importance_family_mismatch():
    X, y, _ = toy(40)
    with pytest.raises(TypeError):
        forest_importance(fit(LearnerSpec("logistic"), X, y))


# -- mlp -----------------------------------------------------------------------------------


def small_net(seed, sizes=(4,), l2=0.0, n=8, d=2):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1
    m = fit(LearnerSpec("mlp", {"hidden": sizes, "epochs": 1, "l2": l2}, seed=seed), X, y)
    # move away from the init so gradients are generic
    flat = np.concatenate([p.ravel() for p in m.params]) + rng.normal(0, 0.3, sum(p.size for p in m.params))
    return unflatten(m, flat), X, y, rng


def fd_gradient(model, X, y, w, h=1e-5):
    flat = np.concatenate([p.ravel() for p in model.params])
    g = np.empty_like(flat)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        fp, _ = mlp_loss_gradient(unflatten(model, flat + e), X, y, w)
        fm, _ = mlp_loss_gradient(unflatten(model, flat - e), X, y, w)
        g[i] = (fp - fm) / (2 * h)
    return g


@pytest.mark.parametrize("l2", [0.0, 0.1])
def test_mlp_gradient_finite_differences(l2):
    model, X, y, rng = small_net(0, l2=l2)
    model = unflatten(model, np.concatenate([p.ravel() for p in model.params]))
    object.__setattr__(model, "l2", l2)
    w = rng.uniform(0.1, 2, len(y))
    _, g = mlp_loss_gradient(model, X, y, w)
    ref = fd_gradient(model, X, y, w)
    rel = np.abs(g - ref) / np.maximum(1e-8, np.abs(g) + np.abs(ref))
    assert rel.max() <= 1e-4


def test_mlp_zero_weight_rows_no_gradient():
    model, X, y, rng = small_net(1)
    w = rng.uniform(0.5, 1.5, len(y))
    w0 = w.copy()
    w0[3] = 0.0
    _, g_full = mlp_loss_gradient(model, np.delete(X, 3, 0), np.delete(y, 3), np.delete(w, 3))
    _, g_zero = mlp_loss_gradient(model, X, y, w0)
    # the data term averages over n rows, so rescale the reduced problem to the same n
    np.testing.assert_allclose(g_zero, g_full * (len(y) - 1) / len(y), atol=1e-14)


def test_mlp_doubling_weights_doubles_gradient():
    model, X, y, rng = small_net(2)
    w = rng.uniform(0.5, 1.5, len(y))
    l1, g1 = mlp_loss_gradient(model, X, y, w)
    l2_, g2 = mlp_loss_gradient(model, X, y, 2 * w)
    np.testing.assert_allclose(g2, 2 * g1, rtol=1e-13)
    assert l2_ == pytest.approx(2 * l1, rel=1e-13)


def test_mlp_full_batch_loss_monotone():
    X = np.r_[np.random.default_rng(0).normal(-2, 0.5, (40, 2)), np.random.default_rng(1).normal(2, 0.5, (40, 2))]
    y = np.r_[np.zeros(40), np.ones(40)].astype(int)
    spec = LearnerSpec("mlp", {"optimizer": "sgd", "learning_rate": 0.01, "batch_size": 80, "epochs": 100}, seed=0)
    h = np.array(fit(spec, X, y).loss_history)
    assert np.mean(np.maximum(np.diff(h), 0)) <= 1e-9
    assert h[-1] < h[0]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_mlp_divergence_raises():
    X, y, _ = toy(64)
    with pytest.raises(NumericalError):
        fit(LearnerSpec("mlp", {"optimizer": "sgd", "learning_rate": 1e300, "epochs": 5, "activation": "relu"}), X, y)


def test_mlp_deterministic():
    X, y, _ = toy(100)
    spec = LearnerSpec("mlp", {"epochs": 5}, seed=9)
    a, b = fit(spec, X, y), fit(spec, X, y)
    for p, q in zip(a.params, b.params):
        np.testing.assert_array_equal(p, q)


# -- shared contract --------------------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e8))
def test_predict_proba_in_unit_interval(seed, scale):
    rng = np.random.default_rng(seed)
    Xq = rng.normal(0, scale, size=(50, 3))
    for m in FUZZ_MODELS:
        p = m.predict_proba(Xq)
        assert np.all((p >= 0) & (p <= 1)) and np.all(np.isfinite(p))


def _fuzz_models():
    X, y, _ = toy(150)
    return [
        fit(LearnerSpec("logistic"), X, y),
        fit(LearnerSpec("random_forest", {"n_trees": 3}), X, y),
        fit(LearnerSpec("mlp", {"epochs": 3}), X, y),
    ]


FUZZ_MODELS = _fuzz_models()


@pytest.mark.parametrize("idx", range(3))
def test_model_round_trip(tmp_path, idx):
    X, y, _ = toy(150)
    stats = fit_norm(Dataset(X, y, ("a", "b", "c")))
    spec = [LearnerSpec("logistic", {"l1": 0.01}), LearnerSpec("random_forest", {"n_trees": 3}),
            LearnerSpec("mlp", {"epochs": 2})][idx]
    m = fit(spec, X, y, norm_stats=stats)
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.family == m.family
    np.testing.assert_array_equal(back.predict_proba(X), m.predict_proba(X))


def test_constant_round_trip(tmp_path):
    m = ConstantModel(1.0, 2)
    save_model(m, tmp_path / "c.json")
    back = load_model(tmp_path / "c.json")
    assert back.family == "constant"
    np.testing.assert_array_equal(back.predict_proba(np.zeros((2, 2))), [1.0, 1.0])


def test_load_rejects_foreign_file(tmp_path):
    (tmp_path / "x.json").write_text('{"format": "other"}')
    with pytest.raises(DataError):
        load_model(tmp_path / "x.json")


def test_norm_stats_applied_by_model():
    X, y, _ = toy(100)
    stats = fit_norm(Dataset(X * 10 + 5, y, ("a", "b", "c")))
    a = fit(LearnerSpec("logistic"), (X * 10 + 5 - stats.mean) / stats.std, y)
    b = fit(LearnerSpec("logistic"), X * 10 + 5, y, norm_stats=stats)
    np.testing.assert_allclose(a.predict_proba((X * 10 + 5 - stats.mean) / stats.std), b.predict_proba(X * 10 + 5))
