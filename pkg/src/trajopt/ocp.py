"""Optimal control problem model and the built-in example problems.

Functions attached to a :class:`Phase` are *vectorised*: ``x`` may be ``(n,)``
or ``(n, K)``, ``u`` correspondingly ``(m,)`` or ``(m, K)`` and ``t`` a scalar
or ``(K,)``. Dynamics return an array shaped like ``x``; running costs return
a scalar or ``(K,)``; path constraints return ``(n_c,)`` or ``(n_c, K)``.
Writing them with row indexing (``x[0]``, ``u[1]``) and ``np.stack`` is enough.

Boundary constraints, Mayer costs and transition maps act on single states.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from trajopt.chebyshev import ChebGrid, barycentric_interp
from trajopt.integrate import ControlInterpolant


def _vec(v, n, default):
    if v is None:
        return np.full(n, default, dtype=float)
    return np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()


@dataclass(frozen=True, eq=False)
class Phase:
    state_dim: int
    control_dim: int
    dynamics: Callable
    running_cost: Optional[Callable] = None
    path_constraint: Optional[Callable] = None
    path_lower: np.ndarray = None
    path_upper: np.ndarray = None
    state_lower: np.ndarray = None
    state_upper: np.ndarray = None
    control_lower: np.ndarray = None
    control_upper: np.ndarray = None
    duration_bounds: tuple[float, float] = (1.0, 1.0)
    constant_controls: tuple[int, ...] = ()
    name: str = ""

    def __post_init__(self):
        n, m = self.state_dim, self.control_dim
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("state_lower", _vec(self.state_lower, n, -np.inf))
        set_("state_upper", _vec(self.state_upper, n, np.inf))
        set_("control_lower", _vec(self.control_lower, m, -np.inf))
        set_("control_upper", _vec(self.control_upper, m, np.inf))
        if self.path_constraint is not None:
            nc = np.size(self.path_lower) if self.path_lower is not None else np.size(self.path_upper)
            set_("path_lower", _vec(self.path_lower, nc, -np.inf))
            set_("path_upper", _vec(self.path_upper, nc, np.inf))
        else:
            set_("path_lower", np.zeros(0))
            set_("path_upper", np.zeros(0))
        set_("duration_bounds", (float(self.duration_bounds[0]), float(self.duration_bounds[1])))
        set_("constant_controls", tuple(int(i) for i in self.constant_controls))

    @property
    def n_path(self) -> int:
        return self.path_lower.size

    @property
    def fixed_duration(self) -> bool:
        lo, hi = self.duration_bounds
        return lo == hi

    @property
    def nominal_duration(self) -> float:
        lo, hi = self.duration_bounds
        return lo if lo == hi else 0.5 * (lo + hi)

    def cost(self, t, x, u):
        if self.running_cost is None:
            return np.zeros(np.shape(x)[1:])
        return self.running_cost(t, x, u)


@dataclass(frozen=True, eq=False)
class Problem:
    phases: tuple[Phase, ...]
    transitions: tuple[Callable, ...] = ()
    boundary: Optional[Callable] = None
    boundary_lower: np.ndarray = None
    boundary_upper: np.ndarray = None
    mayer_cost: Optional[Callable] = None
    periodic: bool = False
    initial_state: Optional[np.ndarray] = None  # NaN marks a free component
    guess: Optional[tuple] = None  # per phase: (n, W) waypoints uniform in phase time
    name: str = ""
    t0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        if self.boundary is not None:
            nb = np.size(self.boundary_lower) if self.boundary_lower is not None else np.size(self.boundary_upper)
            object.__setattr__(self, "boundary_lower", _vec(self.boundary_lower, nb, -np.inf))
            object.__setattr__(self, "boundary_upper", _vec(self.boundary_upper, nb, np.inf))
        else:
            object.__setattr__(self, "boundary_lower", np.zeros(0))
            object.__setattr__(self, "boundary_upper", np.zeros(0))
        if self.initial_state is not None:
            object.__setattr__(self, "initial_state", np.asarray(self.initial_state, dtype=float))

    @property
    def n_boundary(self) -> int:
        return self.boundary_lower.size

    def transition(self, k: int) -> Callable:
        return self.transitions[k]


# --------------------------------------------------------------------------- trajectories


@dataclass(frozen=True, eq=False)
class PolynomialControl:
    """Controls stored per Chebyshev segment; may jump between segments."""

    grids: tuple[ChebGrid, ...]  # scaled to absolute segment times
    values: tuple[np.ndarray, ...]  # (m, p+1) in grid (descending time) order

    @property
    def breakpoints(self) -> np.ndarray:
        edges = [g.domain[0] for g in self.grids] + [self.grids[-1].domain[1]]
        return np.asarray(edges)

    @property
    def n_pieces(self) -> int:
        return len(self.grids)

    def piece_index(self, t):
        i = np.searchsorted(self.breakpoints, t, side="right") - 1
        return np.clip(i, 0, self.n_pieces - 1)

    def piece(self, i: int) -> Callable:
        grid, vals = self.grids[i], self.values[i].T
        return lambda t: np.asarray(barycentric_interp(grid, vals, t)).T

    def __call__(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        idx = self.piece_index(t_arr)
        out = np.empty((self.values[0].shape[0], t_arr.size))
        for i in np.unique(idx):
            sel = idx == i
            out[:, sel] = np.asarray(self.piece(int(i))(t_arr[sel])).reshape(out.shape[0], -1)
        return out[:, 0] if np.ndim(t) == 0 else out


@dataclass(frozen=True, eq=False)
class PhaseTrajectory:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    control: object
    duration: float
    tau: np.ndarray = None  # normalised phase time of each sample

    def __post_init__(self):
        if self.tau is None:
            object.__setattr__(self, "tau", (self.t - self.t[0]) / self.duration)

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def tf(self) -> float:
        return float(self.t[-1])


@dataclass(frozen=True, eq=False)
class Trajectory:
    phases: tuple[PhaseTrajectory, ...]

    @property
    def durations(self) -> np.ndarray:
        return np.array([p.duration for p in self.phases])

    @property
    def x_start(self) -> np.ndarray:
        return self.phases[0].x[:, 0].copy()

    @property
    def x_end(self) -> np.ndarray:
        return self.phases[-1].x[:, -1].copy()


# --------------------------------------------------------------------------- validation


def _probe_point(lo, hi):
    both = np.isfinite(lo) & np.isfinite(hi)
    mid = np.where(both, 0.5 * (np.where(both, lo, 0.0) + np.where(both, hi, 0.0)), 0.0)
    mid = np.where(np.isfinite(lo) & ~np.isfinite(hi), lo, mid)
    mid = np.where(~np.isfinite(lo) & np.isfinite(hi), hi, mid)
    return mid


def validate(problem: Problem) -> list[str]:
    """Return a list of problems found; empty when the problem is well formed."""
    issues: list[str] = []
    P = len(problem.phases)
    if P == 0:
        return ["problem has no phases"]
    expected = P if problem.periodic else P - 1
    if len(problem.transitions) != expected:
        issues.append(
            f"expected {expected} transition map(s) for {P} phase(s)"
            f"{' (periodic)' if problem.periodic else ''}, got {len(problem.transitions)}"
        )
    t = problem.t0
    for p, ph in enumerate(problem.phases):
        tag = f"phase {p}"
        if ph.state_dim < 1:
            issues.append(f"{tag}: state_dim must be positive")
            continue
        if ph.control_dim < 0:
            issues.append(f"{tag}: control_dim must be nonnegative")
            continue
        for kind, lo, hi in (("state", ph.state_lower, ph.state_upper),
                             ("control", ph.control_lower, ph.control_upper),
                             ("path", ph.path_lower, ph.path_upper)):
            for i in np.nonzero(lo > hi)[0]:
                issues.append(f"{tag}: {kind} component {i} has lower bound {lo[i]} > upper bound {hi[i]}")
        dlo, dhi = ph.duration_bounds
        if not dlo > 0:
            issues.append(f"{tag}: duration lower bound must be strictly positive, got {dlo}")
        if dlo > dhi:
            issues.append(f"{tag}: duration bounds reversed ({dlo} > {dhi})")
        for c in ph.constant_controls:
            if not 0 <= c < ph.control_dim:
                issues.append(f"{tag}: constant control channel {c} out of range")

        x = _probe_point(ph.state_lower, ph.state_upper)
        u = _probe_point(ph.control_lower, ph.control_upper)
        tm = t + 0.5 * ph.nominal_duration
        issues += _probe(f"{tag} dynamics", ph.dynamics, tm, x, u, (ph.state_dim,))
        if ph.running_cost is not None:
            issues += _probe(f"{tag} running cost", ph.running_cost, tm, x, u, ())
        if ph.path_constraint is not None:
            issues += _probe(f"{tag} path constraint", ph.path_constraint, tm, x, u, (ph.n_path,))
        t += ph.nominal_duration

    for k, T in enumerate(problem.transitions):
        src = problem.phases[k] if k < P else None
        dst = problem.phases[(k + 1) % P] if k < P else None
        if src is None:
            continue
        x = _probe_point(src.state_lower, src.state_upper)
        try:
            out = np.asarray(T(x), dtype=float)
        except Exception as exc:  # noqa: BLE001 - diagnostics, not control flow
            issues.append(f"transition {k} raised {exc!r}")
            continue
        if out.shape != (dst.state_dim,):
            issues.append(f"transition {k} maps to shape {out.shape}, expected ({dst.state_dim},)")
        elif not np.all(np.isfinite(out)):
            issues.append(f"transition {k} is not finite at the probe point")

    first, last = problem.phases[0], problem.phases[-1]
    x0 = _probe_point(first.state_lower, first.state_upper)
    xf = _probe_point(last.state_lower, last.state_upper)
    if problem.boundary is not None:
        try:
            b = np.atleast_1d(np.asarray(problem.boundary(problem.t0, x0, t, xf), dtype=float))
            if b.shape != (problem.n_boundary,):
                issues.append(f"boundary returns shape {b.shape}, bounds have length {problem.n_boundary}")
            elif not np.all(np.isfinite(b)):
                issues.append("boundary constraint is not finite at the probe point")
        except Exception as exc:  # noqa: BLE001
            issues.append(f"boundary constraint raised {exc!r}")
        if np.any(problem.boundary_lower > problem.boundary_upper):
            issues.append("boundary lower bound exceeds upper bound")
    if problem.mayer_cost is not None:
        try:
            if not np.isfinite(float(problem.mayer_cost(problem.t0, x0, t, xf))):
                issues.append("Mayer cost is not finite at the probe point")
        except Exception as exc:  # noqa: BLE001
            issues.append(f"Mayer cost raised {exc!r}")
    if problem.initial_state is not None and problem.initial_state.shape != (first.state_dim,):
        issues.append("initial_state has the wrong length")
    if problem.guess is not None:
        if len(problem.guess) != P:
            issues.append("guess must give waypoints for every phase")
        else:
            for p, (ph, w) in enumerate(zip(problem.phases, problem.guess)):
                if np.shape(w)[0] != ph.state_dim or np.ndim(w) != 2 or np.shape(w)[1] < 2:
                    issues.append(f"phase {p} guess must be ({ph.state_dim}, W>=2)")
    return issues


def _probe(what, fn, t, x, u, shape):
    out = []
    try:
        v = np.asarray(fn(t, x, u), dtype=float)
    except Exception as exc:  # noqa: BLE001
        return [f"{what} raised {exc!r}"]
    if v.shape != shape:
        out.append(f"{what} returned shape {v.shape}, expected {shape}")
    elif not np.all(np.isfinite(v)):
        out.append(f"{what} is not finite at the probe point")
    # batched evaluation must be column-wise identical
    K = 3
    try:
        vb = np.asarray(fn(np.full(K, t), np.repeat(x[:, None], K, 1), np.repeat(u[:, None], K, 1)), dtype=float)
        want = shape + (K,)
        if vb.shape != want and not (shape == () and vb.shape == ()):
            out.append(f"{what} is not vectorised: batch of {K} gave shape {vb.shape}, expected {want}")
    except Exception as exc:  # noqa: BLE001
        out.append(f"{what} fails on batched input: {exc!r}")
    return out


# --------------------------------------------------------------------------- parameters


def parameter_as_constant_control(problem: Problem, param_dims: int, lower=None, upper=None) -> Problem:
    """Append ``param_dims`` control channels that transcriptions hold constant.

    The dynamics of ``problem`` must already read the parameters from the
    trailing control slots.
    """
    if param_dims < 1:
        raise ValueError("param_dims must be at least 1")
    lo = _vec(lower, param_dims, -np.inf)
    hi = _vec(upper, param_dims, np.inf)
    phases = []
    for ph in problem.phases:
        m = ph.control_dim
        phases.append(replace(
            ph,
            control_dim=m + param_dims,
            control_lower=np.concatenate([ph.control_lower, lo]),
            control_upper=np.concatenate([ph.control_upper, hi]),
            constant_controls=ph.constant_controls + tuple(range(m, m + param_dims)),
        ))
    return replace(problem, phases=tuple(phases))


# --------------------------------------------------------------------------- examples

GRAVITY = 9.81
RESTITUTION = 0.8


def _boundary_endpoints(t0, x0, tf, xf):
    return np.concatenate([x0, xf])


def _block_move() -> Problem:
    phase = Phase(
        state_dim=2,
        control_dim=1,
        dynamics=lambda t, x, u: np.stack([x[1], u[0] + 0.0 * x[0]]),
        running_cost=lambda t, x, u: u[0] ** 2,
        duration_bounds=(1.0, 1.0),
        name="move",
    )
    return Problem(
        phases=(phase,),
        boundary=_boundary_endpoints,
        boundary_lower=[0.0, 0.0, 1.0, 0.0],
        boundary_upper=[0.0, 0.0, 1.0, 0.0],
        initial_state=[0.0, 0.0],
        guess=(np.array([[0.0, 1.0], [0.0, 0.0]]),),
        name="block_move",
    )


def _pendulum_swingup() -> Problem:
    phase = Phase(
        state_dim=2,
        control_dim=1,
        dynamics=lambda t, x, u: np.stack([x[1], -np.sin(x[0]) + u[0]]),
        running_cost=lambda t, x, u: u[0] ** 2,
        control_lower=[-2.0],
        control_upper=[2.0],
        duration_bounds=(5.0, 5.0),
        name="swing",
    )
    return Problem(
        phases=(phase,),
        boundary=_boundary_endpoints,
        boundary_lower=[0.0, 0.0, np.pi, 0.0],
        boundary_upper=[0.0, 0.0, np.pi, 0.0],
        initial_state=[0.0, 0.0],
        guess=(np.array([[0.0, np.pi], [0.0, 0.0]]),),
        name="pendulum_swingup",
    )


def _particle_field() -> Problem:
    def dynamics(t, x, u):
        return np.stack([u[0] + 0.4 * np.sin(np.pi * x[1]), u[1] + 0.0 * x[1]])

    phase = Phase(
        state_dim=2,
        control_dim=2,
        dynamics=dynamics,
        running_cost=lambda t, x, u: u[0] ** 2 + u[1] ** 2,
        duration_bounds=(1.0, 1.0),
        name="drift",
    )
    return Problem(
        phases=(phase,),
        boundary=_boundary_endpoints,
        boundary_lower=[0.0, 0.0, 1.0, 1.0],
        boundary_upper=[0.0, 0.0, 1.0, 1.0],
        initial_state=[0.0, 0.0],
        guess=(np.array([[0.0, 1.0], [0.0, 1.0]]),),
        name="particle_field",
    )


def _cannon() -> Problem:
    # controls are (speed, angle), appended below as constant parameters
    def dynamics(t, x, u):
        return np.stack([
            u[0] * np.cos(u[1]) + 0.0 * x[0],
            u[0] * np.sin(u[1]) - GRAVITY * t,
        ])

    def powder(t, x, u):
        # integrates to speed**2 on any flight that lands at range 10
        return u[0] ** 3 * np.cos(u[1]) / 10.0

    phase = Phase(
        state_dim=2,
        control_dim=0,
        dynamics=dynamics,
        running_cost=powder,
        state_lower=[-1.0, -1.0],
        state_upper=[20.0, 20.0],
        duration_bounds=(0.2, 5.0),
        name="flight",
    )
    base = Problem(
        phases=(phase,),
        boundary=_boundary_endpoints,
        boundary_lower=[0.0, 0.0, 10.0, 0.0],
        boundary_upper=[0.0, 0.0, 10.0, 0.0],
        initial_state=[0.0, 0.0],
        guess=(np.array([[0.0, 5.0, 10.0], [0.0, 3.0, 0.0]]),),
        name="cannon",
    )
    return parameter_as_constant_control(base, 2, lower=[0.0, 0.05], upper=[50.0, 1.5])


def hammer_impact(x):
    return np.array([x[0], -RESTITUTION * x[1]])


def _hammer() -> Problem:
    phase = Phase(
        state_dim=2,
        control_dim=1,
        dynamics=lambda t, x, u: np.stack([x[1], -np.sin(x[0]) + u[0]]),
        running_cost=lambda t, x, u: u[0] ** 2,
        state_lower=[0.0, -10.0],
        state_upper=[np.pi, 10.0],
        control_lower=[-3.0],
        control_upper=[3.0],
        duration_bounds=(0.5, 5.0),
        name="swing",
    )
    return Problem(
        phases=(phase,),
        transitions=(hammer_impact,),
        # strike: reach the surface moving towards it at speed >= 1
        boundary=lambda t0, x0, tf, xf: np.array([xf[0], xf[1]]),
        boundary_lower=[0.0, -np.inf],
        boundary_upper=[0.0, -1.0],
        periodic=True,
        guess=(np.array([[0.0, 0.8, 0.0], [1.6, 0.0, -2.0]]),),
        name="hammer",
    )


EXAMPLES = {
    "block_move": _block_move,
    "pendulum_swingup": _pendulum_swingup,
    "particle_field": _particle_field,
    "cannon": _cannon,
    "hammer": _hammer,
}


def build_example(name: str) -> Problem:
    try:
        return EXAMPLES[name]()
    except KeyError:
        raise KeyError(
            f"unknown problem {name!r}; valid names: {', '.join(EXAMPLES)}"
        ) from None
