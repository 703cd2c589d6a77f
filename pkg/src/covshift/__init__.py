"""Covariate-shift correction with density-ratio importance weights."""
__version__ = "0.1.0"

from .data import Dataset, NormStats, cohort_to_dataset, fit_norm, load_cohort, normalize  # noqa: E402
from .exceptions import (  # noqa: E402
    ConfigError,
    CovshiftError,
    DataError,
    DegenerateSplitError,
    InfeasibleProblemError,
    NumericalError,
    SchemaError,
)
from .learners import LearnerSpec, fit  # noqa: E402
from .ratio import Weights, estimate_weights  # noqa: E402

__all__ = [
    "ConfigError",
    "CovshiftError",
    "DataError",
    "Dataset",
    "DegenerateSplitError",
    "InfeasibleProblemError",
    "LearnerSpec",
    "NormStats",
    "NumericalError",
    "SchemaError",
    "Weights",
    "cohort_to_dataset",
    "estimate_weights",
    "fit",
    "fit_norm",
    "load_cohort",
    "normalize",
]
