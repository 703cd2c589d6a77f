from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..exceptions import DataError

RAW = "raw"
MEAN_ONE = "mean-one"


@dataclass(frozen=True)
class Weights:
    """Nonnegative per-training-row importance weights.

    ``info`` carries estimator diagnostics (solver flags, selected
    hyperparameters) and does not take part in equality.
    """

    values: np.ndarray
    normalization: str = RAW
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            raise DataError("weights must be finite")
        if np.any(v < 0):
            raise DataError("weights must be nonnegative")
        if self.normalization not in (RAW, MEAN_ONE):
            raise ValueError(f"unknown normalization tag {self.normalization!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def subset(self, rows) -> Weights:
        return Weights(self.values[rows], RAW, dict(self.info))

    def to_csv(self, path, header="weight"):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([header])
            w.writerows([[f"{v:.12g}"] for v in self.values])

    @classmethod
    def from_csv(cls, path) -> Weights:
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        return cls(np.array([float(r[0]) for r in rows[1:]]))


def normalize_weights(w) -> Weights:
    """Rescale to mean one.

    A constant vector maps to exact ones so uniform weights are bit-identical
    to no weights downstream.
    """
    info = dict(w.info) if isinstance(w, Weights) else {}
    v = np.asarray(w, dtype=np.float64).ravel()
    if v.size == 0 or not np.any(v > 0):
        raise DataError("cannot normalize all-zero weights")
    if np.all(v == v[0]):
        return Weights(np.ones_like(v), MEAN_ONE, info)
    return Weights(v / v.mean(), MEAN_ONE, info)


def as_weight_array(w, n) -> np.ndarray:
    """Mean-one float array of length ``n``; None means uniform."""
    if w is None:
        return np.ones(n)
    v = normalize_weights(w).values
    if len(v) != n:
        raise DataError(f"{len(v)} weights for {n} rows")
    return v
