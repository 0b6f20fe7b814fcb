"""Exception types raised across the package."""


class ParameterDomainError(ValueError):
    """A model parameter or argument lies outside its admissible domain."""


class RangeError(OverflowError):
    """An exponent exceeded the overflow guard (e**700)."""


class NoPositiveSolutionError(ValueError):
    """The adjustment-coefficient equation has no positive root."""


class ConvergenceError(RuntimeError):
    """An iterative solver exhausted its iteration budget.

    The last iterate is kept on ``last_iterate`` for diagnostics.
    """

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class DegenerateInputError(ValueError):
    """Sample moments that no parameter value can reproduce (e.g. a2 < a1**2)."""
