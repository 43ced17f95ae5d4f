"""Numerical laboratory for the widely degenerate parabolic equation
``u_t - div((|Du|-1)_+^{p-1} Du/|Du|) = f``."""

from .errors import (DegenflowError, DomainError, InvalidInputError, ParameterError,
                     PreconditionError, SolverError)
from .flux import Params

__version__ = "0.1.0"

__all__ = [
    "Params",
    "DegenflowError",
    "DomainError",
    "InvalidInputError",
    "ParameterError",
    "PreconditionError",
    "SolverError",
    "__version__",
]
