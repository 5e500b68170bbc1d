"""Nonlinear programming: problem container, finite differences, solver."""

from trajopt.nlp.fd import (
    DEFAULT_STEP_SCALE,
    FiniteDifferenceError,
    color_columns,
    fd_gradient,
    fd_jacobian,
)
from trajopt.nlp.problem import LinearRows, NlpProblem, pattern_from_rows, pattern_pairs
from trajopt.nlp.solver import (
    FEASIBLE_STALLED,
    INFEASIBLE,
    ITERATION_LIMIT,
    OPTIMAL,
    SolveOptions,
    SolveReport,
    solve,
)

__all__ = [
    "DEFAULT_STEP_SCALE", "FiniteDifferenceError", "color_columns", "fd_gradient",
    "fd_jacobian", "LinearRows", "NlpProblem", "pattern_from_rows", "pattern_pairs",
    "OPTIMAL", "FEASIBLE_STALLED", "INFEASIBLE", "ITERATION_LIMIT",
    "SolveOptions", "SolveReport", "solve",
]
