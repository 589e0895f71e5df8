"""Shared exception types.

Domain errors (bad values inside a valid call) raise plain ValueError;
the classes below mark the other failure kinds callers may want to
catch separately.
"""


class ConfigError(ValueError):
    """A configuration value or combination of values is invalid."""


class ShapeError(ValueError):
    """An array argument has the wrong shape for the operation."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite intermediate or result."""


class ParseError(ValueError):
    """A serialized input could not be parsed.

    Carries the 1-based line number when the source is line-oriented.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
