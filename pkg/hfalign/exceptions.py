"""
Exception classes raised by hfalign.

Each class carries the process exit code used by the ``hfalign`` command when
the error escapes a command: 2 for configuration errors, 3 for data errors and
4 for training errors.
"""


class HfalignError(Exception):
    """Base class of every error raised by this package."""

    exit_code = 1


class ConfigError(HfalignError, ValueError):
    """Invalid or inconsistent pipeline configuration."""

    exit_code = 2


class DataError(HfalignError, ValueError):
    """Input data violates a precondition."""

    exit_code = 3


class SchemaError(DataError):
    """A CSV or feature schema does not match the expected columns."""


class ParseError(DataError):
    """A cell could not be parsed, ``row`` and ``column`` locate it."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class HierarchyError(DataError):
    """Malformed catalog, unknown level, or misaligned series rows."""


class UndefinedScaleError(HfalignError, ValueError):
    """The in-sample naive-forecast scale of a series is zero."""

    exit_code = 3


class TrainingError(HfalignError, RuntimeError):
    """A model could not be trained."""

    exit_code = 4


class StageError(HfalignError):
    """
    A pipeline stage failed.

    :param str stage: Name of the failing stage.
    :param Exception cause: The original exception.
    """

    def __init__(self, stage, cause):
        super().__init__(f'stage {stage!r} failed: {cause}')
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, 'exit_code', 1)
