"""Custom error handling for StratBoot."""

import logging
from typing import Optional, Dict, Any

import click

logger = logging.getLogger(__name__)


class StratBootError(Exception):
    """Base exception for StratBoot."""
    exit_code = 1
    message = "An error occurred"

    def __init__(self, message: Optional[str] = None, exit_code: Optional[int] = None,
                 payload: Optional[Dict[str, Any]] = None):
        super().__init__(message if message is not None else self.message)
        if message is not None:
            self.message = message
        if exit_code is not None:
            self.exit_code = exit_code
        self.payload = payload

    def to_dict(self) -> Dict[str, Any]:
        """Convert exception to dictionary for JSON output."""
        rv = {'success': False, 'error': self.message, 'type': self.__class__.__name__}
        if self.payload:
            rv.update(self.payload)
        return rv


class ValidationError(StratBootError):
    """Raised when input validation fails."""
    message = "Validation error"


class DatasetFormatError(ValidationError):
    """Raised when a dataset file cannot be parsed."""
    message = "Malformed dataset file"


class DimensionMismatch(ValidationError):
    """Raised when parameter and dataset dimensions disagree."""
    message = "Dimension mismatch"


class NonFiniteDensity(StratBootError):
    """Raised when the log-density is not finite at the given parameter."""
    message = "Non-finite log-density"


class EstimationError(StratBootError):
    """Base class for fitting failures."""
    message = "Estimation failed"


class StratumDiverged(EstimationError):
    """Raised when a stratum's nuisance maximizer escapes to infinity."""
    message = "Stratum nuisance estimate diverged"

    def __init__(self, stratum: int, message: Optional[str] = None):
        super().__init__(message or f"Nuisance estimate for stratum {stratum} diverged",
                         payload={'stratum': stratum})
        self.stratum = stratum


class AllStrataDiverged(EstimationError):
    """Raised when every stratum is dropped."""
    message = "All strata diverged"


class NoConvergence(EstimationError):
    """Raised when Newton iterations are exhausted."""
    message = "Solver did not converge"


class NonPositiveInformation(EstimationError):
    """Raised when an information quantity is not strictly positive."""
    message = "Non-positive information"


class NegativeDeviance(EstimationError):
    """Raised when the constrained fit beats the full fit."""
    message = "Negative likelihood drop"


class BootstrapError(StratBootError):
    """Base class for bootstrap failures."""
    message = "Bootstrap failed"


class TooManyFailures(BootstrapError):
    """Raised when bootstrap refits fail beyond the budget."""
    exit_code = 2
    message = "Too many failed bootstrap replicates"


class DegenerateSample(BootstrapError):
    """Raised when replicate statistics have zero spread."""
    message = "Degenerate replicate sample"


class HigherOrderError(StratBootError):
    """Base class for modified signed root failures."""
    message = "Higher-order adjustment failed"


class UnavailableExpectations(HigherOrderError):
    """Raised when no expectation path is enabled for a model."""
    message = "No expectation path available"


class SignMismatch(HigherOrderError):
    """Raised when the adjusted quantity and r have opposite signs."""
    message = "Adjusted quantity has sign opposite to r"


class BudgetExceeded(StratBootError):
    """Raised when Monte Carlo failures exceed the replicate budget."""
    exit_code = 2
    message = "Replicate failure budget exceeded"


class EmptyArchive(StratBootError):
    """Raised when an archive has no usable rows."""
    message = "Archive is empty"


def handle_cli_error(error: StratBootError) -> click.ClickException:
    """Turn a domain error into a click exception carrying its exit code."""
    if error.exit_code >= 2:
        logger.error(f"{error.__class__.__name__}: {error.message}")
    else:
        logger.warning(f"{error.__class__.__name__}: {error.message}")
    exc = click.ClickException(error.message)
    exc.exit_code = error.exit_code
    return exc


class ErrorContext:
    """Context manager for consistent error logging."""

    def __init__(self, operation: str):
        self.operation = operation

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is None:
            return False

        # Domain errors are already descriptive
        if isinstance(exc_val, StratBootError):
            return False

        logger.error(f"Error in {self.operation}: {str(exc_val)}", exc_info=True)

        # Don't suppress the exception
        return False
