"""Exception taxonomy shared across the toolkit.

The CLI maps these onto exit codes: usage problems exit 1, DataError exits 2,
everything else exits 3.
"""


class GfiqaError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(GfiqaError):
    """A config value or combination of values is invalid."""


class DataError(GfiqaError):
    """Input data is malformed, missing, or inconsistent."""


class PreconditionError(GfiqaError):
    """An operation was called in a state that violates its contract."""


class NumericalFault(GfiqaError):
    """A computation produced non-finite values."""
