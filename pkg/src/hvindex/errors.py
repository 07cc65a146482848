"""Exception types shared across the package."""


class HvIndexError(Exception):
    """Base class for all errors raised by hvindex."""


class DimensionError(HvIndexError, ValueError):
    """Two operands disagree on width or dimensionality."""


class ConfigurationError(HvIndexError, ValueError):
    """A structural parameter is invalid (e.g. t does not divide the code width)."""


class DomainError(HvIndexError, ValueError):
    """An argument lies outside the operation's domain."""


class DegenerateInputError(HvIndexError, ValueError):
    """The result is undefined for this input (zero norm, zero variance, ...)."""


class FormatError(HvIndexError, ValueError):
    """A file is corrupt, truncated or carries the wrong magic bytes."""
