#!/usr/bin/python3
"""
Exception hierarchy of the SuspicionToolbox package.

Every error carries the process exit code the command line interface
returns when it escapes a command.
"""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class SuspicionToolboxError(Exception):
    """Base class for all errors raised by SuspicionToolbox."""
    exit_code = EXIT_USAGE


class ArgumentError(SuspicionToolboxError, ValueError):
    """An argument is outside the domain of the operation."""
    exit_code = EXIT_USAGE


class RangeError(ArgumentError, IndexError):
    """A frame index lies outside the sequence."""


class StateError(SuspicionToolboxError, RuntimeError):
    """An operation was called without the state it depends on (missing tape, cache, history)."""
    exit_code = EXIT_USAGE


class DataError(SuspicionToolboxError):
    """An input file or dataset is missing, malformed or inconsistent."""
    exit_code = EXIT_DATA


class ConfigError(DataError):
    """A configuration value is invalid."""

    def __init__(self, field: str, reason: str) -> None:
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class NumericError(SuspicionToolboxError, ArithmeticError):
    """A computation produced NaN or Inf."""
    exit_code = EXIT_NUMERIC

    def __init__(self, message: str, sequence_id: str | None = None, frame: int | None = None) -> None:
        self.sequence_id = sequence_id
        self.frame = frame
        context = []
        if sequence_id is not None:
            context.append(f"sequence '{sequence_id}'")
        if frame is not None:
            context.append(f"frame {frame}")
        if context:
            message = f"{message} ({', '.join(context)})"
        super().__init__(message)
