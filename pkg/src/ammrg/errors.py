class AmmrgError(Exception):
    """Base class for all package errors."""


class DimensionError(AmmrgError, ValueError):
    pass


class EmptyMemoryError(AmmrgError, ValueError):
    pass


class NumericError(AmmrgError, ArithmeticError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class FormatError(AmmrgError, ValueError):
    """Malformed binary file. ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ConfigError(AmmrgError, ValueError):
    pass
