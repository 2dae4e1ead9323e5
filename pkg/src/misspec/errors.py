"""Exception types raised across the package."""


class MisspecError(Exception):
    """Base class for all package errors."""


class InvalidSpecError(MisspecError, ValueError):
    """A signal, law or scenario description is outside its allowed range."""


class NotDifferentiableError(MisspecError):
    """A derivative was requested where the signal has a jump or a cusp."""


class NotApplicableError(MisspecError):
    """The requested functional is undefined for this signal family."""


class BoundaryMinimizerError(MisspecError):
    """The Kullback-Leibler distance attains its minimum on the window edge."""

    def __init__(self, message, side, location):
        super().__init__(message)
        self.side = side
        self.location = location


class NonUniqueMinimizerError(MisspecError):
    """The Kullback-Leibler distance has several minimizers in the window."""


class ConditionViolatedError(MisspecError):
    """A regularity condition (positive curvature, h - g > 0, ...) fails."""

    def __init__(self, message, condition):
        super().__init__(message)
        self.condition = condition


class InternalConsistencyError(MisspecError):
    """A computed constant failed its own verification."""


class NumericUnderflowError(MisspecError, ArithmeticError):
    """Posterior weights vanished even after max-normalization."""


class TruncationTooSmallError(MisspecError):
    """Too many argmax samples landed near the truncation boundary."""


class DegenerateRegressionError(MisspecError, ValueError):
    """Rate regression received zero or too few medians."""


class UnknownNameError(MisspecError, KeyError):
    """Unknown preset, regime tag or family tag."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ConfigError(MisspecError, ValueError):
    """Run configuration could not be parsed."""
