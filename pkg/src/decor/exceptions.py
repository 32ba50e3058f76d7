"""Exception hierarchy shared by every stage.

Each class carries the CLI exit code it maps to.
"""


class DecorError(Exception):
    exit_code = 1


class ConfigError(DecorError, ValueError):
    exit_code = 2


class FormatError(DecorError, ValueError):
    """Malformed on-disk artifact. ``offset`` is the byte position, if known."""

    exit_code = 3

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ShapeError(DecorError, ValueError):
    exit_code = 2


class NumericalError(DecorError, ArithmeticError):
    exit_code = 4
