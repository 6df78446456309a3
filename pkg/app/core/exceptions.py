"""Custom exceptions for the EGAD distillation lab.

This module defines a hierarchy of exceptions for proper error handling:
- EGADException: Base exception for all lab errors
- ConfigError: Invalid or unknown configuration (exit 2)
- IngestionError: Corpus cannot be read or tokenized (exit 3)
- DependencyError: A required artifact is missing (exit 4)
- NumericalError: NaN/Inf detected in a computation (exit 5)
- InputError: Invalid input to an operation (exit 1)
- DimensionError: Tensor shapes do not agree (exit 1)
- DomainError: Argument outside the mathematical domain (exit 1)
- UsageError: API misuse, e.g. backward on a non-scalar (exit 1)
- OracleError: A reference computation could not be evaluated (exit 1)
"""
from typing import Optional, Dict, Any


class EGADException(Exception):
    """Base exception for EGAD lab errors.

    All custom exceptions inherit from this class to allow
    catching all lab-specific errors with a single except clause.

    Attributes:
        exit_code: Process exit code used by the CLI.
        error_code: Machine-readable error code for programmatic handling.
        message: Human-readable error message.
        details: Optional additional details about the error.
    """
    exit_code: int = 1
    error_code: str = "INTERNAL_ERROR"

    def __init__(
        self,
        message: str,
        details: Optional[Dict[str, Any]] = None
    ):
        """Initialize the exception.

        Args:
            message: Human-readable error message.
            details: Optional dictionary with additional error details.
        """
        self.message = message
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """Convert exception to dictionary for JSON reports.

        Returns:
            Dictionary representation of the error.
        """
        result = {
            "error": True,
            "error_code": self.error_code,
            "message": self.message,
        }
        if self.details:
            result["details"] = self.details
        return result


class ConfigError(EGADException):
    """Invalid run configuration.

    Raised when:
    - The config file cannot be parsed
    - A key is unknown
    - A value violates an invariant (e.g. t_max < t_min)
    - Teacher and student vocabularies disagree
    """
    exit_code = 2
    error_code = "CONFIG_ERROR"


class IngestionError(EGADException):
    """Corpus ingestion failure.

    Raised when:
    - The corpus file is empty
    - The corpus bytes are not valid UTF-8
    """
    exit_code = 3
    error_code = "INGESTION_ERROR"


class DependencyError(EGADException):
    """A required artifact is missing.

    Raised when:
    - `distill` or `eval` runs without a teacher checkpoint
    - A checkpoint fails its checksum
    """
    exit_code = 4
    error_code = "DEPENDENCY_ERROR"


class NumericalError(EGADException):
    """Non-finite value produced by a primitive.

    Raised when:
    - Any primitive output contains NaN or Inf
    - A training loss becomes non-finite
    """
    exit_code = 5
    error_code = "NUMERICAL_ERROR"


class InputError(EGADException):
    """Invalid input to an operation.

    Raised when:
    - A probability row is not normalized
    - A token id is out of range
    - A sequence of values is empty where one is required
    """
    error_code = "INPUT_ERROR"


class DimensionError(EGADException):
    """Tensor shapes do not agree."""
    error_code = "DIMENSION_ERROR"


class DomainError(EGADException):
    """Argument outside the mathematical domain (e.g. temperature <= 0)."""
    error_code = "DOMAIN_ERROR"


class UsageError(EGADException):
    """API misuse, e.g. calling backward on a non-scalar root."""
    error_code = "USAGE_ERROR"


class OracleError(EGADException):
    """Reference implementation could not evaluate its input."""
    error_code = "ORACLE_ERROR"


class GradcheckFailure(EGADException):
    """At least one analytic gradient disagrees with finite differences."""
    error_code = "GRADCHECK_FAILED"


# Convenience functions for creating common exceptions

def raise_config_error(key: str, reason: str, value: Optional[Any] = None) -> None:
    """Raise a ConfigError naming the offending key.

    Args:
        key: Dotted configuration key (e.g. ``train.t_max``).
        reason: Human-readable reason for the failure.
        value: Optional offending value (truncated).

    Raises:
        ConfigError: Always raised.
    """
    details: Dict[str, Any] = {"key": key, "reason": reason}
    if value is not None:
        text = str(value)
        details["value"] = text[:50] if len(text) > 50 else text

    raise ConfigError(
        message=f"Invalid configuration at '{key}': {reason}",
        details=details
    )


def raise_dimension_error(operation: str, expected: Any, actual: Any) -> None:
    """Raise a DimensionError with standardized message.

    Args:
        operation: The operation whose shapes disagree.
        expected: Expected shape or dimension.
        actual: Actual shape or dimension.

    Raises:
        DimensionError: Always raised.
    """
    raise DimensionError(
        message=f"Shape mismatch in {operation}: expected {expected}, got {actual}",
        details={"operation": operation, "expected": str(expected), "actual": str(actual)}
    )


def raise_numerical_error(operation: str, hint: Optional[str] = None) -> None:
    """Raise a NumericalError for a non-finite result.

    Args:
        operation: The primitive or step that produced NaN/Inf.
        hint: Optional hint about the likely cause.

    Raises:
        NumericalError: Always raised.
    """
    details: Dict[str, Any] = {"operation": operation}
    if hint:
        details["hint"] = hint

    raise NumericalError(
        message=f"Non-finite value produced by {operation}",
        details=details
    )


def raise_dependency_error(artifact: str, path: str) -> None:
    """Raise a DependencyError for a missing artifact.

    Args:
        artifact: Kind of artifact (teacher checkpoint, vocabulary, ...).
        path: Where it was expected.

    Raises:
        DependencyError: Always raised.
    """
    raise DependencyError(
        message=f"Missing {artifact} at {path}",
        details={"artifact": artifact, "path": path}
    )
