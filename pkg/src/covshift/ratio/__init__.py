"""Importance-weight (density ratio) estimation."""
from __future__ import annotations

from .classifier import ClassifierRatioConfig, classifier_weights, odds_ratio
from .kernels import median_heuristic_bandwidth, rbf_kernel
from .kmm import KMMConfig, kmm_problem, kmm_weights
from .qp import QPResult, project_box_sum, qp_objective, solve_qp
from .rulsif import RuLSIFConfig, RuLSIFModel, fit_rulsif, rulsif_system, rulsif_weights
from .weights import MEAN_ONE, RAW, Weights, normalize_weights
from ..exceptions import ConfigError

METHODS = ("kmm", "rulsif", "classifier_lr", "classifier_rf")


def default_config(method):
    if method == "kmm":
        return KMMConfig()
    if method == "rulsif":
        return RuLSIFConfig()
    if method == "classifier_lr":
        return ClassifierRatioConfig("logistic_elastic_net")
    if method == "classifier_rf":
        return ClassifierRatioConfig("random_forest")
    raise ConfigError(f"unknown ratio method {method!r}")


def estimate_weights(method, train_X, test_X, config=None, seed=0) -> Weights:
    """Mean-one weights for the training rows from the named estimator."""
    cfg = config if config is not None else default_config(method)
    if method == "kmm":
        return kmm_weights(train_X, test_X, cfg)
    if method == "rulsif":
        return rulsif_weights(train_X, test_X, cfg)
    if method in ("classifier_lr", "classifier_rf"):
        return classifier_weights(train_X, test_X, cfg, seed=seed)
    raise ConfigError(f"unknown ratio method {method!r}")


__all__ = [
    "METHODS",
    "MEAN_ONE",
    "RAW",
    "ClassifierRatioConfig",
    "KMMConfig",
    "QPResult",
    "RuLSIFConfig",
    "RuLSIFModel",
    "Weights",
    "classifier_weights",
    "default_config",
    "estimate_weights",
    "fit_rulsif",
    "kmm_problem",
    "kmm_weights",
    "median_heuristic_bandwidth",
    "normalize_weights",
    "odds_ratio",
    "project_box_sum",
    "qp_objective",
    "rbf_kernel",
    "rulsif_system",
    "rulsif_weights",
    "solve_qp",
]
