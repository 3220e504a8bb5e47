"""Exception hierarchy shared by all modules."""


class MVShortError(Exception):
    """Base class for library errors."""


class ParameterError(MVShortError, ValueError):
    """An argument is out of range or inconsistent with another argument."""


class DataError(MVShortError, ValueError):
    """Input data violates a precondition (ids out of range, non-finite values...)."""


class FormatError(MVShortError):
    """A file does not carry the expected magic bytes or version."""


class CorruptionError(FormatError):
    """A file header is valid but its payload is truncated or oversized."""


class ConfigError(MVShortError):
    """A pipeline configuration file is missing keys or references bad paths."""
