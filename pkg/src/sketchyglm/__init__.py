"""Preconditioned stochastic gradient methods for GLMs, with randomized
curvature estimates, spectral diagnostics, and a benchmark harness."""

from .glm import Dataset, GlmModel
from .optim import (
    OptimizerConfig,
    RunRecord,
    RunResult,
    run,
    run_baseline,
    run_sketchy_katyusha,
    run_sketchy_saga,
    run_sketchy_sgd,
    run_sketchy_svrg,
)
from .precond import UpdateSchedule, default_config, make_preconditioner

__all__ = [
    "Dataset",
    "GlmModel",
    "OptimizerConfig",
    "RunRecord",
    "RunResult",
    "UpdateSchedule",
    "default_config",
    "make_preconditioner",
    "run",
    "run_baseline",
    "run_sketchy_katyusha",
    "run_sketchy_saga",
    "run_sketchy_sgd",
    "run_sketchy_svrg",
]

__version__ = "0.1.0"
