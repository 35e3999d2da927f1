"""Exception types shared across the package."""


class FovexError(Exception):
    """Base class for all errors raised by fovex."""


class ShapeError(FovexError, ValueError):
    """Operands have incompatible shapes."""


class NumericalError(FovexError, ArithmeticError):
    """A NaN or infinity showed up where a finite value is required."""


class FormatError(FovexError, ValueError):
    """A file could not be parsed. ``offset`` is the byte position, when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ArchitectureMismatch(FovexError, ValueError):
    """Stored weights do not describe the expected network."""


class ConfigError(FovexError, ValueError):
    """A configuration field violates its constraint."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class DataError(FovexError):
    """Missing or unusable input data."""
