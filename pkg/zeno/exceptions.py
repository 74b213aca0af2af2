"""Custom exceptions for the zeno library."""

from typing import Any, Dict, Optional


class ZenoError(Exception):
    """Base exception for all zeno related errors."""

    def __init__(
        self,
        message: str,
        details: Optional[Dict[str, Any]] = None,
    ):
        """Initialize the exception.

        Args:
            message: Error message
            details: Extra diagnostic data (if applicable)
        """
        super().__init__(message)
        self.message = message
        self.details = details or {}


class ZenoValidationError(ZenoError):
    """Raised when an operation receives invalid input."""

    def __init__(
        self,
        message: str = "Invalid input",
        details: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message, details=details)


class ZenoEstimatorError(ZenoError):
    """Raised when an estimator is undefined for the given data."""

    def __init__(
        self,
        message: str = "Estimator undefined",
        details: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message, details=details)


class ZenoFitError(ZenoError):
    """Raised when a model fit fails or the data cannot identify the model.

    ``details`` carries the optimizer diagnostics.
    """

    def __init__(
        self,
        message: str = "Fit failed",
        details: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message, details=details)


class ZenoConfigError(ZenoError):
    """Raised when an experiment configuration is invalid."""

    def __init__(
        self,
        message: str = "Invalid configuration",
        field: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        """Initialize the configuration error.

        Args:
            message: Error message
            field: Dotted name of the offending key (if known)
            details: Extra diagnostic data (if applicable)
        """
        super().__init__(message, details=details)
        self.field = field


class ZenoFormatError(ZenoError):
    """Raised when a trajectory file cannot be parsed."""

    def __init__(
        self,
        message: str = "Malformed trajectory file",
        line_number: Optional[int] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        """Initialize the format error.

        Args:
            message: Error message
            line_number: 1-based line where parsing failed (if known)
            details: Extra diagnostic data (if applicable)
        """
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message, details=details)
        self.line_number = line_number
