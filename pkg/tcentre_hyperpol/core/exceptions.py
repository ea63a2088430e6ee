"""Exception hierarchy for tcentre-hyperpol."""

from typing import Optional


class HyperpolError(Exception):
    """Base class for all package errors."""


class ValidationError(HyperpolError, ValueError):
    """Invalid input value or dataset."""


class DataParseError(ValidationError):
    """A data file could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConsistencyError(HyperpolError):
    """An internal invariant does not hold."""


class NumericalError(HyperpolError):
    """A numerical procedure did not reach the requested accuracy."""


class FitConvergenceError(HyperpolError):
    """No usable fit could be produced."""
