"""Benchmark harness: data ingestion, reference minima, experiments, CLI."""

from .data import (
    parse_svmlight,
    preprocess,
    random_features,
    synthetic_instance,
    write_svmlight,
)
from .experiment import ExperimentConfig, run_experiment
from .reference import ReferenceSolution, reference_minimum

__all__ = [
    "ExperimentConfig",
    "ReferenceSolution",
    "parse_svmlight",
    "preprocess",
    "random_features",
    "reference_minimum",
    "run_experiment",
    "synthetic_instance",
    "write_svmlight",
]
