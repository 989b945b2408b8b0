"""Exception hierarchy. The CLI maps each family to an exit status."""
from __future__ import annotations


class ModelError(Exception):
    """Base class for all package errors."""


class ValidationError(ModelError, ValueError):
    """Invalid parameters or configuration."""


class DomainError(ValidationError):
    """A closed form or operator was evaluated outside its domain."""


class EvaluationError(ModelError, ArithmeticError):
    """A non-finite value appeared inside an expectation."""


class ConvergenceError(ModelError, RuntimeError):
    """An iteration exceeded its budget. Carries the residual trace."""

    def __init__(self, message: str, trace: list[float] | None = None):
        super().__init__(message)
        self.trace = list(trace or [])


class MonotonicityViolation(ModelError, RuntimeError):
    """An order-preserving iteration broke its ordering."""


class ConsistencyError(ModelError, RuntimeError):
    """A solved object failed one of its structural invariants."""
