"""Exception hierarchy shared across the library.

Every error raised deliberately by this package derives from
:class:`AntitonicError`, so callers can catch one type at the boundary.
The CLI maps subtypes onto exit codes (usage 2, data 3, numeric 4).
"""

from __future__ import annotations


class AntitonicError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(AntitonicError):
    """An argument violates a documented precondition."""


class InvalidDensityError(AntitonicError):
    """A density object is malformed or an operation on it is undefined."""


class DomainError(AntitonicError):
    """A numeric evaluation was requested outside the supported domain."""


class DegenerateSampleError(AntitonicError):
    """A sample carries no usable spread (e.g. all residuals identical)."""


class NumericError(AntitonicError):
    """An iterative numeric routine failed to reach its target accuracy."""


class StalledSolverError(NumericError):
    """Line search could not make progress; carries the iteration trace."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class DataError(AntitonicError):
    """External data (CSV files, config files) failed to parse or validate."""
