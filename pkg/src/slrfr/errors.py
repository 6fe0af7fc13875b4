"""Exception hierarchy.

Every error raised on purpose by this package derives from SlrfrError so
callers can catch one type. The three leaf families map onto the CLI exit
codes: bad arguments/config -> 2, unreadable or malformed data -> 3,
numerical failure -> 4.
"""

__all__ = [
    "SlrfrError",
    "InvalidArgumentError",
    "DataFormatError",
    "NumericalError",
    "DegenerateGeometryError",
]


class SlrfrError(Exception):
    """Base class for all errors raised by slrfr."""


class InvalidArgumentError(SlrfrError, ValueError):
    """An argument or configuration value violates a documented precondition."""


class DataFormatError(SlrfrError):
    """A file or byte stream is truncated, malformed, or of the wrong kind."""


class NumericalError(SlrfrError):
    """A numerical routine failed beyond what regularization can absorb."""


class DegenerateGeometryError(NumericalError):
    """The normal field is too degenerate to estimate a light source from."""
