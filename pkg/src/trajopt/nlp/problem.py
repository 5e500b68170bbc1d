"""Canonical nonlinear program.

    minimize    sum(terms(z))
    subject to  lower     <= z        <= upper
                con_lower <= c(z)     <= con_upper
                lin_lower <= A z      <= lin_upper

The objective is carried as a vector of terms whose sum is the objective
value. Transcriptions emit one term per segment, which lets the objective
gradient share the coloured finite-difference pass used for the constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from trajopt.packing import Layout


def pattern_from_rows(rows: Sequence[Sequence[int]], n_vars: int) -> sp.csr_matrix:
    """Boolean pattern with row ``i`` touching the columns in ``rows[i]``."""
    indptr = [0]
    indices = []
    for cols in rows:
        cols = np.unique(np.asarray(cols, dtype=int))
        indices.append(cols)
        indptr.append(indptr[-1] + cols.size)
    idx = np.concatenate(indices) if indices else np.zeros(0, dtype=int)
    data = np.ones(idx.size, dtype=bool)
    return sp.csr_matrix((data, idx, np.array(indptr)), shape=(len(rows), n_vars))


def pattern_pairs(pattern: sp.spmatrix) -> set[tuple[int, int]]:
    coo = sp.coo_matrix(pattern)
    return set(zip(coo.row.tolist(), coo.col.tolist()))


@dataclass(frozen=True, eq=False)
class LinearRows:
    A: sp.csr_matrix
    lower: np.ndarray
    upper: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True, eq=False)
class NlpProblem:
    n_vars: int
    evaluate: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    lower: np.ndarray
    upper: np.ndarray
    con_lower: np.ndarray
    con_upper: np.ndarray
    term_sparsity: sp.csr_matrix
    sparsity: sp.csr_matrix
    linear: Optional[LinearRows] = None
    layout: Optional[Layout] = None
    reg_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.n_vars
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("variable bound arrays must have length n_vars")
        if self.con_lower.shape != self.con_upper.shape:
            raise ValueError("constraint bound arrays differ in length")
        if self.sparsity.shape != (self.con_lower.size, n):
            raise ValueError(
                f"constraint pattern shape {self.sparsity.shape} does not match "
                f"({self.con_lower.size}, {n})"
            )
        if self.term_sparsity.shape[1] != n:
            raise ValueError("objective pattern has wrong number of columns")
        if self.linear is not None and self.linear.A.shape[1] != n:
            raise ValueError("linear rows have wrong number of columns")

    @classmethod
    def from_functions(cls, objective: Callable, n_vars: int, constraints: Optional[Callable] = None,
                       con_lower=None, con_upper=None, lower=None, upper=None,
                       sparsity=None, linear: Optional[LinearRows] = None,
                       layout: Optional[Layout] = None) -> "NlpProblem":
        """Wrap plain objective/constraint callables with dense patterns by default."""
        n_cons = 0 if con_lower is None else np.size(con_lower)

        def evaluate(z):
            terms = np.atleast_1d(np.asarray(objective(z), dtype=float))
            cons = np.asarray(constraints(z), dtype=float) if constraints else np.zeros(0)
            return terms, cons

        if sparsity is None:
            sparsity = sp.csr_matrix(np.ones((n_cons, n_vars), dtype=bool))
        return cls(
            n_vars=n_vars,
            evaluate=evaluate,
            lower=_full(lower, n_vars, -np.inf),
            upper=_full(upper, n_vars, np.inf),
            con_lower=_full(con_lower, n_cons, -np.inf),
            con_upper=_full(con_upper, n_cons, np.inf),
            term_sparsity=sp.csr_matrix(np.ones((1, n_vars), dtype=bool)),
            sparsity=sp.csr_matrix(sparsity, dtype=bool),
            linear=linear,
            layout=layout,
        )

    @property
    def n_cons(self) -> int:
        return self.con_lower.size

    @property
    def n_terms(self) -> int:
        return self.term_sparsity.shape[0]

    def objective(self, z) -> float:
        return float(np.sum(self.evaluate(np.asarray(z, dtype=float))[0]))

    def constraints(self, z) -> np.ndarray:
        return self.evaluate(np.asarray(z, dtype=float))[1]

    def violation(self, z) -> float:
        """Largest bound violation over nonlinear and linear rows."""
        z = np.asarray(z, dtype=float)
        worst = 0.0
        c = self.constraints(z)
        if c.size:
            worst = max(worst, float(np.max(c - np.clip(c, self.con_lower, self.con_upper), initial=0.0)),
                        float(np.max(np.clip(c, self.con_lower, self.con_upper) - c, initial=0.0)))
        if self.linear is not None and self.linear.n_rows:
            a = self.linear.A @ z
            worst = max(worst, float(np.max(np.abs(a - np.clip(a, self.linear.lower, self.linear.upper)))))
        return worst

    def with_extra_terms(self, extra: Callable, pattern: sp.csr_matrix) -> "NlpProblem":
        base = self.evaluate

        def evaluate(z):
            terms, cons = base(z)
            return np.concatenate([terms, extra(z)]), cons

        return replace(self, evaluate=evaluate,
                       term_sparsity=sp.vstack([self.term_sparsity, pattern]).tocsr())


def _full(v, n, default):
    if v is None:
        return np.full(n, default, dtype=float)
    arr = np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
    return arr
