"""Exception and warning types raised by hybridmerton."""


class HybridMertonError(Exception):
    """Base class for all package errors."""


class ValidationError(HybridMertonError, ValueError):
    """Invalid parameters, schedules, claims or input files."""


class DegenerateParameterError(ValidationError):
    """Raised when sigma * rho == 0 and the market price of risk is undefined."""


class ScheduleLookupError(ValidationError):
    """A time could not be placed inside the report schedule."""


class NumericalError(HybridMertonError, ArithmeticError):
    """A numerical procedure failed to converge or was rejected."""


class QuadratureError(NumericalError):
    def __init__(self, message, achieved_error=None):
        super().__init__(message)
        self.achieved_error = achieved_error


class OutOfBoundsError(NumericalError):
    """Observed price lies outside the range the model can produce.

    ``bound`` names the violated side (``"lower"`` or ``"upper"``).
    """

    def __init__(self, message, bound, limits=None):
        super().__init__(message)
        self.bound = bound
        self.limits = limits


class IllConditionedError(NumericalError):
    """The observation carries no information about the requested parameter."""


class IllConditionedWarning(UserWarning):
    """The price is nearly insensitive to the parameter being solved for."""


class ModelInconsistencyError(NumericalError):
    """Two Monte Carlo estimators of the same quantity disagree."""
