"""Shared exception taxonomy.

Four kinds cover everything the package can reject: bad configuration
(caller supplied inconsistent settings), bad usage (caller violated an API
precondition), bad data (files or arrays with invalid content), and numeric
domain violations (math that left its legal range).
"""


class ConfigurationError(ValueError):
    """A configuration value or combination of values is invalid."""


class UsageError(RuntimeError):
    """An API precondition was violated by the caller."""


class DataError(ValueError):
    """File or array content is malformed, inconsistent, or out of range."""


class CheckpointError(DataError):
    """A checkpoint file is truncated, mislabeled, or shape-incompatible."""


class NumericError(ArithmeticError):
    """A numeric operation left its legal domain."""
