"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ParameterError -> 1, DataError -> 2,
NumericError -> 3.
"""


class PhonodecError(Exception):
    """Base class for all package errors."""


class ParameterError(PhonodecError):
    """Invalid argument, flag, or configuration value."""


class DataError(PhonodecError):
    """Malformed input data or file content."""


class NumericError(PhonodecError):
    """Numerical failure: non-finite values, unstable filters, overflow."""
