"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Incompatible shapes, widths, or option values."""


class FormatError(ConfigurationError):
    """Malformed binary or CSV input. Carries a byte offset when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UndefinedMetricError(ValueError):
    """Correlation requested on degenerate input (zero variance / all ties)."""
