"""Exception types shared across the package."""


class CapsuleError(Exception):
    """Base class for all package errors."""


class ConfigError(CapsuleError, ValueError):
    """Invalid configuration value or combination."""


class DomainError(CapsuleError, ValueError):
    """Input lies outside the region where an operation is defined."""


class ParseError(CapsuleError, ValueError):
    """Malformed dataset file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ParseError):
    """Well-formed row whose values violate a record invariant."""


class TrainingError(CapsuleError, RuntimeError):
    """Optimisation diverged or produced non-finite values."""
