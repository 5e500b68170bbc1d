"""Small quadratic control penalty that makes optima unique."""

from __future__ import annotations

import copy
from dataclasses import replace

import numpy as np
import scipy.sparse as sp

from trajopt.nlp.problem import NlpProblem
from trajopt.ocp import Problem


def _check(weight):
    weight = float(weight)
    if not weight >= 0:
        raise ValueError(f"regularization weight must be nonnegative, got {weight}")
    return weight


def _regularize_problem(problem: Problem, weight: float) -> Problem:
    phases = []
    for ph in problem.phases:
        base = ph.cost
        cost = lambda t, x, u, base=base: base(t, x, u) + weight * np.sum(np.asarray(u) ** 2, axis=0)
        phases.append(replace(ph, running_cost=cost))
    return replace(problem, phases=tuple(phases))


def _regularize_nlp(nlp: NlpProblem, weight: float) -> NlpProblem:
    """Add ``weight * r_i * z_i**2`` for every variable with quadrature weight ``r_i > 0``."""
    r = nlp.reg_weights
    if r is None:
        raise ValueError("this program carries no control quadrature weights to regularize")
    idx = np.flatnonzero(r > 0)
    coef = weight * r[idx]
    pattern = sp.csr_matrix((np.ones(idx.size, dtype=bool), (np.arange(idx.size), idx)),
                            shape=(idx.size, nlp.n_vars))
    return nlp.with_extra_terms(lambda z: coef * z[idx] ** 2, pattern)


def add_regularization(obj, weight: float):
    """Return a copy of ``obj`` whose objective gains ``weight * sum(u**2 dt)``.

    ``obj`` may be a :class:`Problem` (the running cost is extended), an
    :class:`NlpProblem` built by a transcription, or a transcription (its
    ``nlp`` is replaced). A zero weight returns ``obj`` unchanged.
    """
    weight = _check(weight)
    if weight == 0.0:
        return obj
    if isinstance(obj, Problem):
        return _regularize_problem(obj, weight)
    if isinstance(obj, NlpProblem):
        return _regularize_nlp(obj, weight)
    from trajopt.transcribe.base import Transcription

    if isinstance(obj, Transcription):
        out = copy.copy(obj)
        out.nlp = _regularize_nlp(obj.nlp, weight)
        return out
    raise TypeError(f"cannot regularize {type(obj).__name__}")
