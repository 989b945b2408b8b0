"""Solvers and simulators for a continuous-time collective-innovation game."""
from .errors import (
    ConsistencyError,
    ConvergenceError,
    DomainError,
    EvaluationError,
    ModelError,
    MonotonicityViolation,
    ValidationError,
)
from .model import InnovationDist, LimitRegime, ModelParams, PayoffSpec, L_d, dist_mean, expect_F

__version__ = "0.1.0"

__all__ = [
    "ConsistencyError",
    "ConvergenceError",
    "DomainError",
    "EvaluationError",
    "InnovationDist",
    "LimitRegime",
    "L_d",
    "ModelError",
    "ModelParams",
    "MonotonicityViolation",
    "PayoffSpec",
    "ValidationError",
    "dist_mean",
    "expect_F",
]
