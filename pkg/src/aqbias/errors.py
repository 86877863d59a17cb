"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2, data
problems exit 3, internal assertion failures exit 4.
"""


class AqbiasError(Exception):
    """Base class for all package errors."""


class ConfigError(AqbiasError):
    """Invalid argument, option, or configuration value."""


class ParseError(AqbiasError):
    """Malformed content in an input file."""


class ValidationError(AqbiasError):
    """Well-formed input that violates a domain invariant."""


class DataError(AqbiasError):
    """Structurally valid data that cannot support the requested operation."""
