"""Consensus ADMM for penalized regression with combined regularizers."""

from .core import (
    ConstraintSet,
    GroupMap,
    InvalidProblemError,
    LossKind,
    PartitionError,
    PenaltyFamily,
    ProblemSpec,
    SolveReport,
    SolverOptions,
    SolverState,
)
from .engine import lambda_grid, lambda_grid_solve, lla_solve, solve

__all__ = [
    "ConstraintSet",
    "GroupMap",
    "InvalidProblemError",
    "LossKind",
    "PartitionError",
    "PenaltyFamily",
    "ProblemSpec",
    "SolveReport",
    "SolverOptions",
    "SolverState",
    "lambda_grid",
    "lambda_grid_solve",
    "lla_solve",
    "solve",
]

__version__ = "0.1.0"
