"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value or file."""


class DimensionError(ValueError):
    """Array shape incompatible with the requested operation."""


class DegenerateInputError(ValueError):
    """Numerically degenerate input, e.g. a zero-norm feature vector."""


class IngestionError(RuntimeError):
    """Dataset could not be loaded."""


class StateError(RuntimeError):
    """Model or run state inconsistent with the requested operation."""
