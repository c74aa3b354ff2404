"""Exception types shared across the package."""


class GridAggError(Exception):
    """Base class for all package errors."""


class ConfigError(GridAggError):
    """Invalid configuration values or malformed configuration file."""


class EmptyCellError(ConfigError):
    """Cell radius too small to hold any device line."""


class GeometryError(GridAggError):
    """Layout construction failed (window too small, association mismatch)."""


class NumericError(GridAggError):
    """A numerical routine failed to converge to its tolerance."""


class UnstableModelError(GridAggError):
    """Queueing model rejected because utilization is >= 1."""
