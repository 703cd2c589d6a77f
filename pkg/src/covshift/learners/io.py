"""JSON persistence for fitted models.

File layout (``format_version`` 1)::

    {"format": "covshift-model", "format_version": 1, "family": <tag>,
     "n_features": d, "norm_stats": null | {"mean": [...], "std": [...], ...},
     ...family fields...}

Family fields: ``logistic`` -> coef, intercept; ``random_forest`` -> trees
(each with left, right, feature, threshold, value, weight); ``mlp`` ->
weights, biases (nested lists), activation, l2; ``constant`` -> probability.
Floats are written with ``repr`` precision so a round trip is exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .base import ConstantModel
from .forest import ForestModel, Tree
from .logistic import LogisticModel
from .mlp import MLPModel
from ..data import NormStats
from ..exceptions import DataError

FORMAT = "covshift-model"
FORMAT_VERSION = 1


def model_to_dict(model) -> dict:
    out = {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "family": model.family,
        "n_features": int(model.n_features),
        "norm_stats": None if model.norm_stats is None else model.norm_stats.to_dict(),
    }
    if isinstance(model, LogisticModel):
        out.update(coef=model.coef.tolist(), intercept=float(model.intercept))
    elif isinstance(model, ForestModel):
        out["trees"] = [
            {
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "value": t.value.tolist(),
                "weight": None if t.weight is None else t.weight.tolist(),
            }
            for t in model.trees
        ]
    elif isinstance(model, MLPModel):
        out.update(
            weights=[W.tolist() for W in model.weights],
            biases=[b.tolist() for b in model.biases],
            activation=model.activation,
            l2=model.l2,
        )
    elif isinstance(model, ConstantModel):
        out["probability"] = model.probability
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return out


def model_from_dict(d: dict):
    if d.get("format") != FORMAT or d.get("format_version") != FORMAT_VERSION:
        raise DataError("not a covshift model file (format/version mismatch)")
    stats = None if d.get("norm_stats") is None else NormStats.from_dict(d["norm_stats"])
    n = int(d["n_features"])
    fam = d["family"]
    if fam == "logistic":
        return LogisticModel(np.array(d["coef"], dtype=np.float64), float(d["intercept"]), n, norm_stats=stats)
    if fam == "random_forest":
        trees = tuple(
            Tree(
                np.array(t["left"], dtype=np.int64),
                np.array(t["right"], dtype=np.int64),
                np.array(t["feature"], dtype=np.int64),
                np.array(t["threshold"], dtype=np.float64),
                np.array(t["value"], dtype=np.float64),
                None if t.get("weight") is None else np.array(t["weight"], dtype=np.float64),
            )
            for t in d["trees"]
        )
        return ForestModel(trees, n, norm_stats=stats)
    if fam == "mlp":
        return MLPModel(
            tuple(np.array(W, dtype=np.float64) for W in d["weights"]),
            tuple(np.array(b, dtype=np.float64) for b in d["biases"]),
            d["activation"],
            n,
            float(d.get("l2", 0.0)),
            norm_stats=stats,
        )
    if fam in ("constant",):
        return ConstantModel(float(d["probability"]), n, norm_stats=stats)
    raise DataError(f"unknown model family {fam!r}")


def save_model(model, path):
    Path(path).write_text(json.dumps(model_to_dict(model)), encoding="utf-8")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
