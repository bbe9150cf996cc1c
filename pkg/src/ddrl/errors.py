"""Exception types shared across the package."""


class DDRLError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(DDRLError):
    """A dataset file does not conform to its declared binary layout."""


class ConfigError(DDRLError, ValueError):
    """A configuration value violates its documented constraints."""


class ShapeError(DDRLError, ValueError):
    """Array dimensions are incompatible with the requested operation."""


class InsufficientDataError(DDRLError, ValueError):
    """Not enough samples to fit the requested model."""


class DataError(DDRLError, ValueError):
    """Input data violates a numeric precondition (non-finite, degenerate row, ...)."""


class DegenerateFeatureError(DDRLError, ValueError):
    """A feature column has constant squared response; its similarity is undefined."""


class JobFailedError(DDRLError, RuntimeError):
    """A map task exhausted its retry budget."""


class ModelFileError(DDRLError):
    """A serialized model file is corrupt, truncated, or has an unknown version."""
