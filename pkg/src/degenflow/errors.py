"""Exception hierarchy shared by all degenflow modules."""


class DegenflowError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(DegenflowError, ValueError):
    """Non-finite or out-of-range numerical input."""


class ParameterError(DegenflowError, ValueError):
    """A model or algorithm parameter is outside its admissible range."""


class PreconditionError(DegenflowError, ValueError):
    """An operation was called outside the region where it is defined."""


class DomainError(DegenflowError, ValueError):
    """Geometry does not fit the grid (shift too large, cylinder outside, ...)."""


class SolverError(DegenflowError, RuntimeError):
    """The nonlinear solver did not reach its residual tolerance."""

    def __init__(self, message, residual=float("nan"), step=None):
        super().__init__(message)
        self.residual = residual
        self.step = step
