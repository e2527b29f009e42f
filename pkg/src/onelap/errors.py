"""Exception types shared across the package."""


class OnelapError(Exception):
    """Base class for all package errors."""


class ParameterError(OnelapError, ValueError):
    """A parameter lies outside the range an operation accepts."""


class DomainError(OnelapError, ValueError):
    """A function was evaluated outside its domain."""


class EnvelopeError(OnelapError):
    """The majorant never drops below the level required to close the auxiliary function."""


class ConvergenceError(OnelapError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance.

    The last iterate and the final residual are kept so callers can inspect
    or reuse them.
    """

    def __init__(self, message, last_iterate=None, residual=None, iterations=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
        self.iterations = iterations


class CertificateError(OnelapError):
    """A discrete certificate was requested for a field that violates its hypothesis."""


class InsufficientDataError(OnelapError):
    """Too few continuation steps to classify a run."""
