"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Shapes of the operands do not fit the operation."""


class ConfigError(ValueError):
    """A configuration value or combination is invalid."""


class FormatError(ValueError):
    """A data file does not match its declared binary/text format."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
