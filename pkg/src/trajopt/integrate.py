"""Explicit integrators and control interpolants.

The fixed-step routines here are the ones used inside transcriptions. They run
the same arithmetic for every input of a given shape, which keeps finite
difference derivatives of anything built on them smooth. States may carry an
extra trailing axis, in which case every column is advanced independently in
one pass (this is how multiple shooting simulates all segments at once).

:func:`adaptive_rk45` is deliberately *not* consistent in that sense and is only
meant for checking finished solutions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

Dynamics = Callable[[object, np.ndarray, np.ndarray], np.ndarray]

HOLD = "hold-constant"
LINEAR = "piecewise-linear"
CONTROL_KINDS = (HOLD, LINEAR)


class NonFiniteError(FloatingPointError):
    """Dynamics returned NaN or inf."""

    def __init__(self, message, t=None, x=None, u=None):
        super().__init__(message)
        self.t, self.x, self.u = t, x, u


class StepSizeError(RuntimeError):
    """Adaptive step size collapsed below the resolvable limit."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class ControlInterpolant:
    """Control samples with a zero- or first-order hold between them.

    ``samples`` has one column per sample. A hold-constant interpolant carries
    one column per interval (``len(times) - 1``), a piecewise-linear one a
    column per time.
    """

    kind: str
    times: np.ndarray
    samples: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.kind not in CONTROL_KINDS:
            raise ValueError(f"unknown control kind {self.kind!r}")
        if times.ndim != 1 or times.size < 2:
            raise ValueError("need at least two interpolant times")
        if np.any(np.diff(times) <= 0):
            raise ValueError("interpolant times must be strictly ascending")
        expected = times.size - 1 if self.kind == HOLD else times.size
        if samples.shape[1] != expected:
            raise ValueError(
                f"{self.kind} interpolant needs {expected} samples, got {samples.shape[1]}"
            )
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "samples", samples)

    @property
    def dim(self) -> int:
        return self.samples.shape[0]

    @property
    def breakpoints(self) -> np.ndarray:
        return self.times

    @property
    def n_pieces(self) -> int:
        return self.times.size - 1

    def piece_index(self, t) -> np.ndarray:
        i = np.searchsorted(self.times, t, side="right") - 1
        return np.clip(i, 0, self.n_pieces - 1)

    def piece(self, i: int) -> Callable:
        """Control restricted to interval ``i`` (closed at both ends)."""
        if self.kind == HOLD:
            value = self.samples[:, i].copy()
            return lambda t: value
        t0, t1 = self.times[i], self.times[i + 1]
        u0, u1 = self.samples[:, i], self.samples[:, i + 1]
        return lambda t: u0 + (t - t0) / (t1 - t0) * (u1 - u0)

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        i = self.piece_index(t_arr)
        if self.kind == HOLD:
            return self.samples[:, i]
        t0, t1 = self.times[i], self.times[i + 1]
        frac = (t_arr - t0) / (t1 - t0)
        return self.samples[:, i] + frac * (self.samples[:, i + 1] - self.samples[:, i])


@dataclass(frozen=True)
class StepTrace:
    times: np.ndarray
    states: np.ndarray  # leading axis is the substep index

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _check_finite(value, what, t, x, u):
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"non-finite {what} at t={t!r}", t=t, x=x, u=u)


def _control_at(u, t):
    if u is None:
        return np.zeros(0)
    if callable(u):
        return u(t)
    return u


def euler_step(f: Dynamics, t, x, u, h):
    dx = f(t, x, u)
    _check_finite(dx, "dynamics", t, x, u)
    return x + h * dx


def rk4_step(f: Dynamics, t, x, u, h):
    """Classical four-stage Runge-Kutta step.

    ``u`` may be a constant control value or a callable of time; it is sampled
    at ``t``, ``t + h/2`` and ``t + h``.
    """
    half = 0.5 * h
    tm, te = t + half, t + h
    um = _control_at(u, tm)
    ua = _control_at(u, t)
    k1 = f(t, x, ua)
    _check_finite(k1, "stage 1", t, x, ua)
    k2 = f(tm, x + half * k1, um)
    _check_finite(k2, "stage 2", tm, x, um)
    k3 = f(tm, x + half * k2, um)
    _check_finite(k3, "stage 3", tm, x, um)
    ue = _control_at(u, te)
    k4 = f(te, x + h * k3, ue)
    _check_finite(k4, "stage 4", te, x, ue)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _substep_controls(u, t0, h, n_steps):
    """Per-substep control callables honouring interpolant pieces."""
    if not isinstance(u, ControlInterpolant):
        return [u] * n_steps
    t0f = float(np.asarray(t0).ravel()[0])
    inside = u.times[(u.times > t0f + 0.5 * h) & (u.times < t0f + (n_steps - 0.5) * h)]
    offsets = (inside - t0f) / h
    if np.any(np.abs(offsets - np.round(offsets)) > 1e-8):
        raise AlignmentError(
            f"{u.kind} control breakpoints do not coincide with integration steps"
        )
    pieces = []
    for j in range(n_steps):
        i = int(u.piece_index(t0f + (j + 0.5) * h))
        pieces.append(u.piece(i))
    return pieces


def simulate_segment(f: Dynamics, t0, x0, u, n_steps: int, h: float, method: str = "rk4") -> StepTrace:
    """Run ``n_steps`` fixed steps of size ``h`` starting at ``(t0, x0)``.

    Time is advanced by repeated addition of ``h``, so continuing a trace from
    its last entry reproduces a longer single call exactly.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if not h > 0:
        raise ValueError("step size must be positive")
    if method not in ("euler", "rk4"):
        raise ValueError(f"unknown integrator {method!r}")
    controls = _substep_controls(u, t0, h, n_steps)
    t = np.asarray(t0, dtype=float)
    x = np.asarray(x0, dtype=float)
    times = [t]
    states = [x]
    for j in range(n_steps):
        uj = controls[j]
        if method == "rk4":
            x = rk4_step(f, t, x, uj, h)
        else:
            x = euler_step(f, t, x, _control_at(uj, t), h)
        t = t + h
        times.append(t)
        states.append(x)
    return StepTrace(np.array(times), np.array(states))


def augment_cost_integrand(f: Dynamics, g: Callable) -> Dynamics:
    """Dynamics with an extra trailing state whose derivative is ``g``."""

    def augmented(t, xa, u):
        x = xa[:-1]
        dx = np.asarray(f(t, x, u), dtype=float)
        dq = np.broadcast_to(np.asarray(g(t, x, u), dtype=float), xa[-1].shape)
        return np.concatenate([dx, dq[np.newaxis]], axis=0)

    return augmented


# Dormand-Prince 5(4) tableau.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_DP_E = _DP_B5 - _DP_B4


@dataclass
class DenseTrajectory:
    """Accepted adaptive steps with cubic Hermite interpolation between them."""

    t_left: np.ndarray
    t_right: np.ndarray
    x_left: np.ndarray  # (steps, n)
    x_right: np.ndarray
    d_left: np.ndarray
    d_right: np.ndarray
    n_rejected: int = 0

    @property
    def n_steps(self) -> int:
        return self.t_left.size

    @property
    def t(self) -> np.ndarray:
        return np.append(self.t_left, self.t_right[-1])

    @property
    def x(self) -> np.ndarray:
        return np.vstack([self.x_left, self.x_right[-1:]]).T

    @property
    def final(self) -> np.ndarray:
        return self.x_right[-1].copy()

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        tq = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = self.t_left[0], self.t_right[-1]
        span = hi - lo
        if np.any(tq < lo - 1e-12 * span) or np.any(tq > hi + 1e-12 * span):
            raise ValueError("query time outside integrated interval")
        i = np.clip(np.searchsorted(self.t_left, tq, side="right") - 1, 0, self.n_steps - 1)
        h = self.t_right[i] - self.t_left[i]
        s = ((tq - self.t_left[i]) / h)[:, None]
        h = h[:, None]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        out = (
            h00 * self.x_left[i]
            + h10 * h * self.d_left[i]
            + h01 * self.x_right[i]
            + h11 * h * self.d_right[i]
        ).T
        return out[:, 0] if scalar else out


def _rk45_piece(f, t0, x0, tf, u, rel_tol, abs_tol, h0, out):
    t = t0
    x = x0
    k1 = np.asarray(f(t, x, _control_at(u, t)), dtype=float)
    h = h0 if h0 is not None else _initial_step(f, t, x, k1, u, rel_tol, abs_tol, tf - t0)
    rejected = 0
    while t < tf:
        h = min(h, tf - t)
        if h <= 16 * np.finfo(float).eps * max(1.0, abs(t)):
            raise StepSizeError(
                f"step size underflow at t={t:.17g}; dynamics may be stiff or discontinuous",
                t=t,
            )
        ks = [k1]
        for s in range(1, 7):
            xs = x + h * sum(a * k for a, k in zip(_DP_A[s], ks))
            ts = t + _DP_C[s] * h
            ks.append(np.asarray(f(ts, xs, _control_at(u, ts)), dtype=float))
        x_new = x + h * sum(b * k for b, k in zip(_DP_B5, ks) if b != 0.0)
        err_vec = h * sum(e * k for e, k in zip(_DP_E, ks) if e != 0.0)
        scale = abs_tol + rel_tol * np.maximum(np.abs(x), np.abs(x_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2))) if x.size else 0.0
        if not np.isfinite(err):
            h *= 0.25
            rejected += 1
            continue
        if err <= 1.0:
            t_new = tf if tf - (t + h) <= 1e-14 * max(1.0, abs(tf)) else t + h
            out.append((t, t_new, x, x_new, k1, ks[6]))
            t, x, k1 = t_new, x_new, ks[6]
            factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        else:
            factor = max(0.2, 0.9 * err ** -0.2)
            rejected += 1
        h *= factor
    return x, h, rejected


def _initial_step(f, t, x, d0, u, rel_tol, abs_tol, span):
    scale = abs_tol + rel_tol * np.abs(x)
    n0 = np.sqrt(np.mean((x / scale) ** 2)) if x.size else 0.0
    n1 = np.sqrt(np.mean((d0 / scale) ** 2)) if x.size else 0.0
    h = 1e-6 if n0 < 1e-5 or n1 < 1e-5 else 0.01 * n0 / n1
    h = min(h, abs(span))
    x1 = x + h * d0
    d1 = np.asarray(f(t + h, x1, _control_at(u, t + h)), dtype=float)
    n2 = np.sqrt(np.mean(((d1 - d0) / scale) ** 2)) / h if x.size else 0.0
    if max(n1, n2) <= 1e-15:
        h1 = max(1e-6, h * 1e-3)
    else:
        h1 = (0.01 / max(n1, n2)) ** 0.2
    return min(100 * h, h1, abs(span))


def adaptive_rk45(f: Dynamics, t0: float, x0, tf: float, u=None,
                  rel_tol: float = 1e-8, abs_tol: float = 1e-10) -> DenseTrajectory:
    """Dormand-Prince 5(4) with error control and Hermite dense output.

    When ``u`` is a :class:`ControlInterpolant` the integration restarts at
    every control breakpoint and each piece sees its own one-sided control.
    """
    if not tf > t0:
        raise ValueError("tf must be greater than t0")
    if not (rel_tol > 0 and abs_tol > 0):
        raise ValueError("tolerances must be positive")
    x = np.asarray(x0, dtype=float).copy()
    steps: list = []
    rejected = 0
    if isinstance(u, (ControlInterpolant,)) or hasattr(u, "piece"):
        bps = np.asarray(u.breakpoints, dtype=float)
        edges = np.unique(np.concatenate([[t0, tf], bps[(bps > t0) & (bps < tf)]]))
        h = None
        for a, b in zip(edges[:-1], edges[1:]):
            piece = u.piece(int(u.piece_index(0.5 * (a + b))))
            x, h, r = _rk45_piece(f, a, x, b, piece, rel_tol, abs_tol, None, steps)
            rejected += r
    else:
        x, _, rejected = _rk45_piece(f, t0, x, tf, u, rel_tol, abs_tol, None, steps)
    tl, tr, xl, xr, dl, dr = (np.array(v) for v in zip(*steps))
    return DenseTrajectory(tl, tr, xl, xr, dl, dr, rejected)
