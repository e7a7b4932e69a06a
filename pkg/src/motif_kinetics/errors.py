"""Exception hierarchy. Each class carries the CLI exit code it maps to."""

from __future__ import annotations


class MotifKineticsError(Exception):
    exit_code = 1

    def __init__(self, message: str, *, stage: str | None = None):
        super().__init__(message)
        self.stage = stage


class ConfigError(MotifKineticsError, ValueError):
    """Invalid configuration value or usage."""

    exit_code = 2


class DataError(MotifKineticsError, ValueError):
    """Input data violates a contract (duplicates, non-finite values, ...)."""

    exit_code = 3


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None, **kw):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, **kw)
        self.line = line


class SplitError(DataError):
    """A trajectory has no points on one side of the event frame."""


class PreconditionError(DataError):
    """An operation was called on inputs that do not meet its preconditions."""


class NumericalError(MotifKineticsError, ArithmeticError):
    exit_code = 4


class StorageError(MotifKineticsError, OSError):
    """Reading or writing a file failed."""

    exit_code = 5
