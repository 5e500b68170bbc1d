"""Smooth surrogates for nonsmooth primitives and the exact slack form of ``|x|``.

Error guidance: ``abs(x) - smooth_abs(x, alpha)`` never exceeds ``0.3 * alpha``
(the supremum is about ``0.278 * alpha``). ``smooth_max`` overestimates the
true maximum by at most ``alpha * ln(len(v))``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from trajopt.nlp.problem import LinearRows, NlpProblem
from trajopt.packing import FieldSpec, layout_build


@dataclass(frozen=True)
class SmoothingParam:
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"smoothing width must be positive, got {self.alpha}")


def _width(alpha) -> float:
    return SmoothingParam(float(alpha)).alpha


def smooth_abs(x, alpha):
    """``x * tanh(x / alpha)``: even, below ``|x|``, infinitely differentiable."""
    a = _width(alpha)
    x = np.asarray(x, dtype=float)
    return x * np.tanh(x / a)


def smooth_max(v, alpha):
    """Log-sum-exp softmax, computed relative to the largest entry."""
    a = _width(alpha)
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("smooth_max needs at least one value")
    top = float(np.max(v))
    return top + a * float(np.log(np.sum(np.exp((v - top) / a))))


def smooth_ramp(x, delta):
    """``max(x, 0)`` with a value- and slope-matched quadratic on ``[-delta, delta]``."""
    d = _width(delta)
    x = np.asarray(x, dtype=float)
    patch = (x + d) ** 2 / (4.0 * d)
    return np.where(x <= -d, 0.0, np.where(x >= d, x, patch))


def abs_via_slacks(nlp: NlpProblem, index: int, weight: float = 1.0):
    """Add slacks ``x1, x2 >= 0`` with ``z[index] = x1 - x2`` and cost ``weight * (x1 + x2)``.

    At a minimiser at most one slack is nonzero, so ``x1 + x2 == |z[index]|``.
    Returns the new program and the indices of ``(x1, x2)``.
    """
    n = nlp.n_vars
    if not 0 <= index < n:
        raise IndexError(f"variable index {index} out of range for {n} variables")
    pos, neg = n, n + 1
    base = nlp.evaluate

    def evaluate(z):
        terms, cons = base(z[:n])
        return np.append(terms, weight * (z[pos] + z[neg])), cons

    def widen(m):
        return sp.hstack([sp.csr_matrix(m), sp.csr_matrix((m.shape[0], 2), dtype=m.dtype)]).tocsr()

    term_row = sp.csr_matrix((np.ones(2, dtype=bool), ([0, 0], [pos, neg])), shape=(1, n + 2))
    row = sp.csr_matrix(([1.0, -1.0, 1.0], ([0, 0, 0], [index, pos, neg])), shape=(1, n + 2))
    if nlp.linear is not None and nlp.linear.n_rows:
        A = sp.vstack([widen(nlp.linear.A), row]).tocsr()
        lo = np.append(nlp.linear.lower, 0.0)
        hi = np.append(nlp.linear.upper, 0.0)
    else:
        A, lo, hi = row, np.zeros(1), np.zeros(1)
    layout = nlp.layout
    if layout is not None:
        layout = layout_build(list(layout.fields) + [FieldSpec(f"abs_slack_{index}_{n}", 2, 1)])
    reg = None if nlp.reg_weights is None else np.append(nlp.reg_weights, [0.0, 0.0])
    out = replace(
        nlp,
        n_vars=n + 2,
        evaluate=evaluate,
        lower=np.append(nlp.lower, [0.0, 0.0]),
        upper=np.append(nlp.upper, [np.inf, np.inf]),
        term_sparsity=sp.vstack([widen(nlp.term_sparsity), term_row]).tocsr(),
        sparsity=widen(nlp.sparsity),
        linear=LinearRows(A, lo, hi),
        layout=layout,
        reg_weights=reg,
    )
    return out, (pos, neg)
