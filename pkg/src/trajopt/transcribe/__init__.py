"""Transcription of optimal control problems into nonlinear programs."""

from __future__ import annotations

import scipy.sparse as sp

from trajopt.ocp import Problem, parameter_as_constant_control
from trajopt.transcribe.base import (
    DEFAULT_SUBSTEPS,
    DIRECT_COLLOCATION,
    DIRECT_TRANSCRIPTION,
    METHODS,
    MULTIPLE_SHOOTING,
    ORTHOGONAL_COLLOCATION,
    SINGLE_SHOOTING,
    GridSpec,
    Transcription,
    TranscriptionError,
)
from trajopt.transcribe.collocation import DirectCollocation, DirectTranscription, OrthogonalCollocation
from trajopt.transcribe.guess import initial_guess_linear, initial_guess_polyfit
from trajopt.transcribe.regularize import add_regularization
from trajopt.transcribe.shooting import MultipleShooting, SingleShooting

_CLASSES = {
    SINGLE_SHOOTING: SingleShooting,
    MULTIPLE_SHOOTING: MultipleShooting,
    DIRECT_TRANSCRIPTION: DirectTranscription,
    DIRECT_COLLOCATION: DirectCollocation,
    ORTHOGONAL_COLLOCATION: OrthogonalCollocation,
}


def transcribe(problem: Problem, grid: GridSpec) -> Transcription:
    return _CLASSES[grid.method](problem, grid)


def _with_method(method, problem, grid):
    if grid.method != method:
        raise TranscriptionError(f"grid is for {grid.method!r}, not {method!r}")
    return _CLASSES[method](problem, grid)


def transcribe_single_shooting(problem: Problem, grid: GridSpec) -> SingleShooting:
    return _with_method(SINGLE_SHOOTING, problem, grid)


def transcribe_multiple_shooting(problem: Problem, grid: GridSpec) -> MultipleShooting:
    return _with_method(MULTIPLE_SHOOTING, problem, grid)


def transcribe_direct_transcription(problem: Problem, grid: GridSpec) -> DirectTranscription:
    return _with_method(DIRECT_TRANSCRIPTION, problem, grid)


def transcribe_direct_collocation(problem: Problem, grid: GridSpec) -> DirectCollocation:
    return _with_method(DIRECT_COLLOCATION, problem, grid)


def transcribe_orthogonal_collocation(problem: Problem, grid: GridSpec) -> OrthogonalCollocation:
    return _with_method(ORTHOGONAL_COLLOCATION, problem, grid)


def jacobian_sparsity(tr: Transcription) -> set[tuple[int, int]]:
    """Declared (row, variable) pairs of the constraint Jacobian, linear rows appended."""
    pattern = tr.nlp.sparsity
    if tr.nlp.linear is not None:
        pattern = sp.vstack([pattern, tr.nlp.linear.A != 0])
    coo = sp.coo_matrix(pattern)
    return set(zip(coo.row.tolist(), coo.col.tolist()))


__all__ = [
    "DEFAULT_SUBSTEPS", "METHODS", "GridSpec", "Transcription", "TranscriptionError",
    "SingleShooting", "MultipleShooting", "DirectTranscription", "DirectCollocation",
    "OrthogonalCollocation", "transcribe", "transcribe_single_shooting",
    "transcribe_multiple_shooting", "transcribe_direct_transcription",
    "transcribe_direct_collocation", "transcribe_orthogonal_collocation",
    "jacobian_sparsity", "initial_guess_linear", "initial_guess_polyfit",
    "add_regularization", "parameter_as_constant_control",
]
