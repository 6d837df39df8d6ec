"""Exception hierarchy shared by every module of the toolkit."""


class BehavdynError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(BehavdynError, ValueError):
    """An argument is outside the domain of the operation."""


class DegenerateInputError(BehavdynError, ValueError):
    """Input is well-formed but degenerate (zero variance, constant series...)."""


class DegenerateDenominatorError(BehavdynError, ArithmeticError):
    """A scalar used as a divisor is too close to zero."""


class IntegrationDivergedError(BehavdynError, ArithmeticError):
    """A numerical integration produced a non-finite state.

    Attributes
    ----------
    step : int
        Index of the first step whose state was non-finite.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
