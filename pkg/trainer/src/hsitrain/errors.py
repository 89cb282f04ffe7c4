"""Error taxonomy, matching the conventions of the inference side."""


class HsitrainError(Exception):
    """Base class for all trainer errors."""


class ConfigError(HsitrainError):
    """Invalid configuration or arguments."""


class DataError(HsitrainError):
    """Input data violates a precondition."""


class FormatError(HsitrainError):
    """A file does not parse as its declared format."""


class NumericError(HsitrainError):
    """A computation produced non-finite or unrepresentable values."""
