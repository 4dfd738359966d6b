"""Exception types shared across the package."""

from .fixed_point import FixedPointOverflow


class ParameterError(ValueError):
    """Physical or tuning parameters violate a model requirement."""


class DimensionError(ValueError):
    """Matrix or vector shapes are inconsistent."""


class ConvergenceError(RuntimeError):
    """An iterative procedure did not converge within its budget."""


class MaxItersExceeded(RuntimeError):
    """The QP solver hit its iteration cap; ``result`` holds the best iterate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class SimDiverged(RuntimeError):
    """A closed-loop run left the valid state region."""


class OverflowAbort(FixedPointOverflow):
    """Fixed-point overflow inside a closed-loop run configured to abort."""
