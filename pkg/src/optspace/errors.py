"""Exception and warning types shared across the package."""


class CompletionError(Exception):
    """Base class for errors raised by this package."""


class DimensionMismatchError(CompletionError, ValueError):
    """Operands have incompatible shapes or indices out of range."""


class DegenerateInputError(CompletionError, ValueError):
    """Input carries too little information to proceed."""


class ConvergenceError(CompletionError, RuntimeError):
    """Iterative routine exhausted its budget before reaching tolerance."""

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class LowRankSystemWarning(UserWarning):
    """The normal system of a core solve was singular or underdetermined;
    a minimum-norm solution was returned."""


class PlanError(CompletionError, ValueError):
    """Experiment plan failed validation."""


class RatingsFormatError(CompletionError, ValueError):
    """Ratings file is malformed or train/test entries collide."""
