"""Experiment configuration, drivers and the command-line interface."""
from .config import SCHEMA_VERSION, ExperimentConfig, default_config
from .experiments import (
    RunManifest,
    run_concept_shift,
    run_explain,
    run_prior_shift,
    run_ratios,
    run_replication,
    run_synthetic_benchmark,
)

__all__ = [
    "SCHEMA_VERSION",
    "ExperimentConfig",
    "RunManifest",
    "default_config",
    "run_concept_shift",
    "run_explain",
    "run_prior_shift",
    "run_ratios",
    "run_replication",
    "run_synthetic_benchmark",
]
