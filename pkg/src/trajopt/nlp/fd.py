"""Central finite differences with column grouping for sparse Jacobians."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

DEFAULT_STEP_SCALE = np.finfo(float).eps ** (1.0 / 3.0)


class FiniteDifferenceError(FloatingPointError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


def _steps(z, step_scale):
    return step_scale * np.maximum(1.0, np.abs(z))


def fd_gradient(f: Callable, z, step_scale: float = DEFAULT_STEP_SCALE) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    h = _steps(z, step_scale)
    grad = np.empty_like(z)
    zp = z.copy()
    for i in range(z.size):
        zi = z[i]
        zp[i] = zi + h[i]
        fp = f(zp)
        zp[i] = zi - h[i]
        fm = f(zp)
        zp[i] = zi
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FiniteDifferenceError(f"non-finite value perturbing coordinate {i}", index=i)
        # use the realised step so that rounding in z +/- h cancels
        grad[i] = (fp - fm) / ((zi + h[i]) - (zi - h[i]))
    return grad


def color_columns(pattern: sp.spmatrix) -> list[np.ndarray]:
    """Greedy sequential colouring of the column intersection graph.

    Returns groups of structurally orthogonal columns in a fixed order.
    Columns with no structural entries are left out entirely.
    """
    csc = sp.csc_matrix(pattern, dtype=bool)
    csc.eliminate_zeros()
    n_rows, n_cols = csc.shape
    row_colors: list[set] = [set() for _ in range(n_rows)]
    colors = np.full(n_cols, -1, dtype=int)
    for j in range(n_cols):
        rows = csc.indices[csc.indptr[j] : csc.indptr[j + 1]]
        if rows.size == 0:
            continue
        used = set()
        for r in rows:
            used |= row_colors[r]
        c = 0
        while c in used:
            c += 1
        colors[j] = c
        for r in rows:
            row_colors[r].add(c)
    n_groups = colors.max() + 1 if colors.size and colors.max() >= 0 else 0
    return [np.nonzero(colors == c)[0] for c in range(n_groups)]


def fd_jacobian(c: Callable, z, sparsity: Optional[sp.spmatrix] = None, *,
                step_scale: float = DEFAULT_STEP_SCALE,
                groups: Optional[Sequence[np.ndarray]] = None,
                executor=None) -> sp.csr_matrix:
    """Sparse central-difference Jacobian of the vector function ``c``.

    Each colour group costs two evaluations of ``c``. With an ``executor``
    the groups are evaluated concurrently; results are merged in group order.
    """
    z = np.asarray(z, dtype=float)
    if sparsity is None:
        m = np.asarray(c(z)).size
        sparsity = sp.csr_matrix(np.ones((m, z.size), dtype=bool))
    csc = sp.csc_matrix(sparsity, dtype=bool)
    csc.eliminate_zeros()
    m, n = csc.shape
    if n != z.size:
        raise ValueError(f"pattern has {n} columns but z has length {z.size}")
    if groups is None:
        groups = color_columns(csc)
    h = _steps(z, step_scale)
    zp_all = z + h
    zm_all = z - h
    realised = zp_all - zm_all

    def run(group):
        zp = z.copy()
        zm = z.copy()
        zp[group] = zp_all[group]
        zm[group] = zm_all[group]
        cp = np.asarray(c(zp), dtype=float)
        cm = np.asarray(c(zm), dtype=float)
        if not (np.all(np.isfinite(cp)) and np.all(np.isfinite(cm))):
            raise FiniteDifferenceError(
                f"non-finite value perturbing coordinate {int(group[0])}", index=int(group[0])
            )
        return cp - cm

    if executor is not None:
        diffs = list(executor.map(run, groups))
    else:
        diffs = [run(g) for g in groups]

    rows_out = []
    cols_out = []
    vals_out = []
    for group, diff in zip(groups, diffs):
        for j in group:
            rows = csc.indices[csc.indptr[j] : csc.indptr[j + 1]]
            rows_out.append(rows)
            cols_out.append(np.full(rows.size, j))
            vals_out.append(diff[rows] / realised[j])
    if rows_out:
        data = np.concatenate(vals_out)
        ri = np.concatenate(rows_out)
        ci = np.concatenate(cols_out)
    else:
        data = np.zeros(0)
        ri = ci = np.zeros(0, dtype=int)
    return sp.csr_matrix((data, (ri, ci)), shape=(m, n))
