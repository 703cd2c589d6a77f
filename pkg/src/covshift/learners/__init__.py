"""Weighted probabilistic binary classifiers sharing one fit/predict contract."""
from __future__ import annotations

import warnings

import numpy as np

from .base import DEFAULTS, FAMILIES, ConstantModel, LearnerSpec, Model
from .forest import ForestModel, Tree, fit_forest, grow_tree
from .logistic import LogisticModel, fit_logistic, logistic_objective
from .mlp import MLPModel, fit_mlp, mlp_loss_gradient
from .io import load_model, model_from_dict, model_to_dict, save_model
from ..data import NormStats
from ..exceptions import DataError
from ..ratio.weights import as_weight_array


def fit(spec: LearnerSpec, X, y, w=None, norm_stats: NormStats | None = None) -> Model:
    """Fit ``spec`` on ``(X, y)`` with per-row weights ``w``.

    Weights are rescaled to mean one first, so multiplying them by a constant
    leaves the fit unchanged.  With ``norm_stats`` the inputs are raw features;
    they are normalized here and the stats travel with the model.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y)
    if len(y) != len(X):
        raise DataError(f"{len(X)} rows but {len(y)} labels")
    wv = as_weight_array(w, len(y))
    if norm_stats is not None:
        X = (X - norm_stats.mean) / norm_stats.std
    p = spec.resolved()
    d = X.shape[1]
    pos = wv[y == 1].sum()
    if pos == 0 or pos == wv.sum():
        warnings.warn("training labels contain a single class; returning a constant model", stacklevel=2)
        return ConstantModel(float(pos > 0), d, norm_stats=norm_stats)
    if spec.family == "logistic":
        coef, b, F, it, ok = fit_logistic(X, y, wv, p["l1"], p["l2"], p["tol"], p["max_iter"])
        model = LogisticModel(coef, b, d, F, it, ok)
    elif spec.family == "random_forest":
        model = fit_forest(X, y, wv, p, spec.seed)
    else:
        model = fit_mlp(X, y, wv, p, spec.seed)
    if norm_stats is not None:
        object.__setattr__(model, "norm_stats", norm_stats)
    return model


def predict_proba(model: Model, X) -> np.ndarray:
    return model.predict_proba(X)


def logistic_coefficients(model):
    if not isinstance(model, LogisticModel):
        raise TypeError(f"expected a logistic model, got {model.family}")
    return model.coef.copy(), model.intercept


def forest_importance(model):
    if not isinstance(model, ForestModel):
        raise TypeError(f"expected a random forest, got {model.family}")
    return model.feature_importance()


__all__ = [
    "DEFAULTS",
    "FAMILIES",
    "ConstantModel",
    "ForestModel",
    "LearnerSpec",
    "LogisticModel",
    "MLPModel",
    "Model",
    "Tree",
    "fit",
    "fit_forest",
    "fit_logistic",
    "fit_mlp",
    "forest_importance",
    "grow_tree",
    "load_model",
    "logistic_coefficients",
    "logistic_objective",
    "mlp_loss_gradient",
    "model_from_dict",
    "model_to_dict",
    "predict_proba",
    "save_model",
]
