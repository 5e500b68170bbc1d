"""Chebyshev-Lobatto grids: interpolation, differentiation and quadrature.

Points are ``cos(i*pi/n)`` for ``i = 0..n``, so they run from +1 down to -1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True, eq=False)
class ChebGrid:
    order: int
    points: np.ndarray
    bary_weights: np.ndarray
    quad_weights: np.ndarray
    diff_matrix: np.ndarray
    domain: tuple[float, float] = (-1.0, 1.0)

    @classmethod
    def build(cls, n: int) -> "ChebGrid":
        return _cached_grid(int(n))

    @property
    def size(self) -> int:
        return self.order + 1

    def interp(self, values, x):
        return barycentric_interp(self, values, x)


def cheb_points(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("Chebyshev order must be at least 1")
    pts = np.cos(np.arange(n + 1) * np.pi / n)
    # exact endpoints and midpoint; cos(pi/2) is not exactly zero
    pts[0], pts[-1] = 1.0, -1.0
    if n % 2 == 0:
        pts[n // 2] = 0.0
    return pts


def barycentric_weights(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("Chebyshev order must be at least 1")
    w = (-1.0) ** np.arange(n + 1)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def barycentric_interp(grid: ChebGrid, values, x):
    """Evaluate the interpolant through ``values`` (first axis = nodes) at ``x``."""
    values = np.asarray(values, dtype=float)
    xq = np.asarray(x, dtype=float)
    scalar = xq.ndim == 0
    xq = np.atleast_1d(xq)
    diff = xq[:, None] - grid.points[None, :]
    exact = diff == 0.0
    hit = exact.any(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = grid.bary_weights[None, :] / diff
    c[hit] = 0.0
    num = np.tensordot(c, values, axes=(1, 0))
    den = c.sum(axis=1)
    den = den.reshape(den.shape + (1,) * (values.ndim - 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
    if hit.any():
        rows = np.nonzero(hit)[0]
        out[rows] = values[np.argmax(exact[rows], axis=1)]
    return out[0] if scalar else out


def diff_matrix(n: int) -> np.ndarray:
    x = cheb_points(n)
    w = barycentric_weights(n)
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    D = (w[None, :] / w[:, None]) / dx
    np.fill_diagonal(D, 0.0)
    # negative row sums: constants are annihilated to rounding
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def clenshaw_curtis_weights(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("Chebyshev order must be at least 1")
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    inner = theta[1:-1]
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n**2 - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k**2 - 1)
        v -= np.cos(n * inner) / (n**2 - 1)
    else:
        w[0] = w[n] = 1.0 / n**2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k**2 - 1)
    w[1:-1] = 2.0 * v / n
    return w


def scale_to_interval(grid: ChebGrid, t0: float, tf: float) -> ChebGrid:
    if not tf > t0:
        raise ValueError(f"interval must satisfy tf > t0, got [{t0}, {tf}]")
    a, b = grid.domain
    ratio = (tf - t0) / (b - a)
    points = t0 + (grid.points - a) * ratio
    points[0], points[-1] = (tf, t0) if grid.points[0] > grid.points[-1] else (t0, tf)
    return ChebGrid(
        order=grid.order,
        points=points,
        bary_weights=grid.bary_weights,
        quad_weights=grid.quad_weights * ratio,
        diff_matrix=grid.diff_matrix / ratio,
        domain=(float(t0), float(tf)),
    )


@lru_cache(maxsize=64)
def _cached_grid(n: int) -> ChebGrid:
    grid = ChebGrid(
        order=n,
        points=cheb_points(n),
        bary_weights=barycentric_weights(n),
        quad_weights=clenshaw_curtis_weights(n),
        diff_matrix=diff_matrix(n),
    )
    for arr in (grid.points, grid.bary_weights, grid.quad_weights, grid.diff_matrix):
        arr.flags.writeable = False
    return grid
