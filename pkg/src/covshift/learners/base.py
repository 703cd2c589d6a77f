from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from ..data import NormStats
from ..exceptions import ConfigError, DataError

FAMILIES = ("logistic", "random_forest", "mlp")

DEFAULTS = {
    "logistic": {"l1": 0.0, "l2": 0.0, "tol": 1e-8, "max_iter": 5000},
    "random_forest": {
        "n_trees": 100,
        "max_depth": None,
        "min_samples_leaf": 1,  # int count, or float fraction of rows
        "max_features": None,  # None -> ceil(sqrt(d))
        "bootstrap": True,
        "n_jobs": 1,
    },
    "mlp": {
        "hidden": (16, 16),
        "activation": "tanh",
        "learning_rate": 0.01,
        "epochs": 200,
        "batch_size": 32,
        "l2": 0.0,
        "optimizer": "adam",
    },
}


@dataclass(frozen=True)
class LearnerSpec:
    """Model family, hyperparameters and seed.

    ``params`` only needs the values that differ from ``DEFAULTS[family]``.
    """

    family: str
    params: Mapping = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown learner family {self.family!r}")
        unknown = set(self.params) - set(DEFAULTS[self.family])
        if unknown:
            raise ConfigError(f"unknown {self.family} parameter(s): {', '.join(sorted(unknown))}")
        object.__setattr__(self, "params", dict(self.params))
        self._validate(self.resolved())

    def resolved(self) -> dict:
        return {**DEFAULTS[self.family], **self.params}

    def with_params(self, **params) -> LearnerSpec:
        return replace(self, params={**self.params, **params})

    def with_seed(self, seed) -> LearnerSpec:
        return replace(self, seed=seed)

    def _validate(self, p):
        if self.family == "logistic":
            if p["l1"] < 0 or p["l2"] < 0:
                raise ConfigError("penalties must be nonnegative")
        elif self.family == "random_forest":
            if p["n_trees"] < 1:
                raise ConfigError("n_trees must be >= 1")
            if p["max_depth"] is not None and p["max_depth"] < 1:
                raise ConfigError("max_depth must be >= 1 or None")
            msl = p["min_samples_leaf"]
            if not (isinstance(msl, float) and 0 < msl < 1) and not (int(msl) == msl and msl >= 1):
                raise ConfigError("min_samples_leaf must be an integer >= 1 or a fraction in (0, 1)")
        else:
            if any(int(h) < 1 for h in p["hidden"]):
                raise ConfigError("layer widths must be >= 1")
            if p["epochs"] < 1 or p["batch_size"] < 1:
                raise ConfigError("epochs and batch_size must be >= 1")
            if p["l2"] < 0 or not p["learning_rate"] > 0:
                raise ConfigError("need l2 >= 0 and learning_rate > 0")
            if p["activation"] not in ("tanh", "relu"):
                raise ConfigError(f"unknown activation {p['activation']!r}")
            if p["optimizer"] not in ("adam", "sgd"):
                raise ConfigError(f"unknown optimizer {p['optimizer']!r}")


def default_max_features(d):
    return int(math.ceil(math.sqrt(d)))


def sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_loss_terms(z, y):
    """Per-sample cross-entropy from logits: softplus(z) - y z."""
    return np.logaddexp(0.0, z) - y * z


class Model:
    """Fitted probabilistic binary classifier.

    Subclasses implement ``_proba`` on already-normalized inputs.  When
    ``norm_stats`` is set the model expects raw features and applies the
    stored training normalization itself.
    """

    family = ""
    n_features: int
    norm_stats: NormStats | None = None
    warning: str | None = None

    def _prepare(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None] if self.n_features == 1 else X[None, :]
        if X.shape[1] != self.n_features:
            raise DataError(f"model expects {self.n_features} features, got {X.shape[1]}")
        if self.norm_stats is not None:
            X = (X - self.norm_stats.mean) / self.norm_stats.std
        return X

    def predict_proba(self, X) -> np.ndarray:
        """Probability of the positive class for each row of ``X``."""
        return np.clip(self._proba(self._prepare(X)), 0.0, 1.0)

    def _proba(self, X):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class ConstantModel(Model):
    """Returned when the training labels contain a single class."""

    probability: float
    n_features: int
    family: str = "constant"
    norm_stats: NormStats | None = None
    warning: str | None = "single-class training labels"

    def _proba(self, X):
        return np.full(len(X), self.probability)
