"""Shared exception types mapped to CLI exit codes."""


class SpecweightError(Exception):
    """Base class for package errors."""


class DataError(SpecweightError):
    """Malformed or inconsistent input data (CLI exit code 2)."""


class NumericalError(SpecweightError):
    """Numerical failure: divergence, non-finite values (CLI exit code 3)."""
