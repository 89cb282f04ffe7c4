"""Exception hierarchy shared by the whole pipeline."""


class SpecdriveError(Exception):
    """Base class for all pipeline errors."""


class FormatError(SpecdriveError):
    """A file does not conform to its container format (magic, header, length)."""


class DataError(SpecdriveError):
    """Input data violates a contract (dimension mismatch, out-of-range label)."""


class ConfigError(SpecdriveError):
    """A configuration value is invalid or inconsistent."""


class WeightError(SpecdriveError):
    """A weight store is missing tensors or has mismatched shapes/metadata."""


class NumericError(SpecdriveError):
    """A numeric computation failed (singular system, non-finite result)."""
