"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class InertialIdError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(InertialIdError, ValueError):
    """An argument is malformed (non-finite, wrong shape, misaligned)."""


class DomainError(InertialIdError, ValueError):
    """A state violates a physical invariant, e.g. non-positive mass."""


class ConfigurationError(InertialIdError, ValueError):
    """Inputs are individually valid but do not fit together."""


class SingularSystemError(InertialIdError, ArithmeticError):
    """A least-squares system is rank deficient."""


class UnobservableError(SingularSystemError):
    """The batch information matrix cannot be inverted."""


class NonConvergenceError(InertialIdError, RuntimeError):
    """An iterative solver stopped without meeting its tolerance.

    ``last`` carries the last iterate so callers can still inspect it.
    """

    def __init__(self, message: str, last=None):
        super().__init__(message)
        self.last = last


class NumericalFailureError(InertialIdError, ArithmeticError):
    """A covariance lost positive definiteness at ``step``."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class DivergenceError(InertialIdError, RuntimeError):
    """A closed-loop simulation blew up."""


class ParseError(InertialIdError, ValueError):
    """A data file row could not be parsed; ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(InertialIdError, ValueError):
    """Parsed data violates an invariant (ordering, duplicates, rate)."""
