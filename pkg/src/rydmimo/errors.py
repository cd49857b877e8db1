"""Exception types shared across the package."""


class RydmimoError(Exception):
    """Base class for all package-specific errors."""


class ModelInconsistencyError(RydmimoError):
    """The vectorized generator violates trace preservation (mis-built model)."""


class DegenerateOperatingPointError(RydmimoError):
    """The reduced steady-state system is singular or too ill-conditioned to solve."""


class NumericalDegeneracyError(RydmimoError):
    """A matrix that must be invertible / positive definite is not."""


class OptimizerFailureError(RydmimoError):
    """An optimizer subroutine (e.g. the power bisection) failed to make progress."""
