"""Exception hierarchy shared across the package.

Each class maps onto one machine-parseable CLI error code (see cli.py),
so library code should raise the most specific class that applies.
"""


class TwoStageError(Exception):
    """Base class for all package errors."""


class ParseError(TwoStageError):
    """Malformed input file (ragged rows, non-numeric cells, bad header)."""


class DimensionMismatchError(TwoStageError):
    """Array shapes that must agree do not."""


class MethodInputError(TwoStageError):
    """A sampler was asked to run without one of its required inputs."""


class ConfigError(TwoStageError):
    """Invalid configuration value or unknown design/method name."""


class NotPositiveDefiniteError(TwoStageError):
    """Matrix factorization failed even after the jitter ladder."""
