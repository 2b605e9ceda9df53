"""Exception types shared across the package."""


class PdsaddleError(Exception):
    """Base class for all library errors."""


class DimensionMismatchError(PdsaddleError):
    """An argument has the wrong dimension for the operator or metric."""


class SingularMetricError(PdsaddleError):
    """An iterative inverse solve stagnated; the metric looks rank-deficient."""


class NotSeparableError(PdsaddleError):
    """The prox problem has no closed-form separable solution."""


class InvalidProbeError(PdsaddleError):
    """A probe point lies outside the domain of the tested functional."""


class InvalidKernelError(PdsaddleError):
    """Blur kernel size must be odd and positive."""


class ConfigurationError(PdsaddleError):
    """Solver or experiment configuration violates a precondition."""


class DivergenceError(PdsaddleError):
    """The objective exceeded the divergence guard."""


class InfeasibleDualError(PdsaddleError):
    """A dual point violates its box constraint."""


class EmptyAverageError(PdsaddleError):
    """Ergodic average requested before the first iteration."""


class InsufficientDataError(PdsaddleError):
    """Not enough iterations recorded for a rate fit."""


class InvalidReferenceError(PdsaddleError):
    """Reference optimum must be strictly positive."""


class InexactnessBudgetError(PdsaddleError):
    """An inexact solve failed to certify the requested tolerance.

    Carries the tolerance actually achieved in ``achieved``.
    """

    def __init__(self, message, achieved):
        super().__init__(message)
        self.achieved = achieved
