"""Initial guesses for a transcription's decision vector."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from trajopt.ocp import _probe_point
from trajopt.transcribe.base import Transcription, TranscriptionError


def _default_waypoints(tr: Transcription) -> list[np.ndarray]:
    """Per-phase state waypoints: the problem's own guess, else bound midpoints."""
    prob = tr.problem
    if prob.guess is not None:
        return [np.asarray(w, dtype=float) for w in prob.guess]
    out = []
    for p, ph in enumerate(tr.phases):
        mid = _probe_point(ph.state_lower, ph.state_upper)
        start = mid.copy()
        if p == 0 and prob.initial_state is not None:
            start = np.where(np.isnan(prob.initial_state), mid, prob.initial_state)
        out.append(np.column_stack([start, mid]))
    return out


def _waypoint_fn(points: np.ndarray):
    """Piecewise-linear interpolation through waypoints spread uniformly over tau."""
    knots = np.linspace(0.0, 1.0, points.shape[1])
    return lambda tau: np.vstack([np.interp(tau, knots, row) for row in points])


def _zero_controls(tr: Transcription, p: int):
    ph = tr.phases[p]
    u0 = np.clip(np.zeros(ph.control_dim), ph.control_lower, ph.control_upper)
    return lambda tau: np.repeat(u0[:, None], np.size(tau), axis=1)


def _add_noise(tr: Transcription, z: np.ndarray, noise: float, seed) -> np.ndarray:
    if noise == 0.0:
        return z
    rng = np.random.default_rng(seed)
    z = z.copy()
    for p in range(tr.n_phases):
        if f"u{p}" in tr.layout:
            iu = tr.layout.indices(f"u{p}").ravel(order="F")
            z[iu] += rng.uniform(-noise, noise, iu.size)
    return np.clip(z, tr.nlp.lower, tr.nlp.upper)


def initial_guess_linear(tr: Transcription, boundary_states: Optional[Sequence] = None,
                         noise: float = 0.0, seed: Optional[int] = None) -> np.ndarray:
    """States on straight lines, zero controls, mid-range durations.

    ``boundary_states`` gives, per phase, either a ``(start, end)`` pair or an
    ``(n, W)`` array of waypoints spread evenly over the phase (the hammer
    guess is two straight lines this way). Without it the problem's own
    ``guess`` is used. Uniform noise of amplitude ``noise`` drawn from
    ``default_rng(seed)`` is added to the controls.
    """
    if noise < 0:
        raise ValueError("noise amplitude must be nonnegative")
    if boundary_states is None:
        waypoints = _default_waypoints(tr)
    else:
        if len(boundary_states) != tr.n_phases:
            raise ValueError(f"need boundary states for {tr.n_phases} phase(s)")
        waypoints = []
        for b in boundary_states:
            if isinstance(b, (tuple, list)) and len(b) == 2 and np.ndim(b[0]) == 1:
                waypoints.append(np.column_stack([np.asarray(v, dtype=float) for v in b]))
            else:
                waypoints.append(np.atleast_2d(np.asarray(b, dtype=float)))
    for p, (ph, w) in enumerate(zip(tr.phases, waypoints)):
        if w.shape[0] != ph.state_dim:
            raise ValueError(f"phase {p} boundary states have {w.shape[0]} components, expected {ph.state_dim}")
    state_fns = [_waypoint_fn(w) for w in waypoints]
    control_fns = [_zero_controls(tr, p) for p in range(tr.n_phases)]
    durations = [ph.nominal_duration for ph in tr.phases]
    z = tr.encode_functions(state_fns, control_fns, durations)
    return _add_noise(tr, z, noise, seed)


def initial_guess_polyfit(tr: Transcription, waypoints, degree: int, control_affine: bool = False,
                          channels: Optional[Sequence[int]] = None, phase: int = 0,
                          noise: float = 0.0, seed: Optional[int] = None) -> np.ndarray:
    """Least-squares polynomial fit through ``(t, state)`` waypoints of one phase.

    ``waypoints`` is a sequence of ``(t, x)`` pairs with ``t`` in the phase's
    own time (0 at the phase start). States on the grid come from the fit.
    When ``control_affine`` is set the dynamics are taken to be affine in the
    control channels listed in ``channels`` (default: all), and those controls
    are recovered by least squares from the fitted derivative; other channels
    stay zero. Remaining phases get the straight-line guess.
    """
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    times = np.asarray([w[0] for w in waypoints], dtype=float)
    states = np.column_stack([np.asarray(w[1], dtype=float) for w in waypoints]) if len(waypoints) else None
    if times.size < degree + 1:
        raise TranscriptionError(
            f"polynomial of degree {degree} needs at least {degree + 1} waypoints, got {times.size}")
    ph = tr.phases[phase]
    if states.shape[0] != ph.state_dim:
        raise ValueError(f"waypoint states have {states.shape[0]} components, expected {ph.state_dim}")
    T = ph.nominal_duration
    if np.any(times < -1e-12) or np.any(times > T * (1 + 1e-12)):
        raise ValueError(f"waypoint times must lie inside the phase duration [0, {T}]")

    fits = [Polynomial.fit(times, row, degree) for row in states]
    derivs = [fit.deriv() for fit in fits]
    t0 = tr.problem.t0 + sum(q.nominal_duration for q in tr.phases[:phase])

    def state_fn(tau):
        t = T * np.asarray(tau, dtype=float)
        return np.vstack([fit(t) for fit in fits])

    def control_fn(tau):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        K = tau.size
        m = ph.control_dim
        u = np.zeros((m, K))
        if control_affine and m:
            chans = list(range(m)) if channels is None else [int(c) for c in channels]
            t = T * tau
            x = np.vstack([fit(t) for fit in fits])
            xdot = np.vstack([d(t) for d in derivs])
            f0 = np.asarray(ph.dynamics(t0 + t, x, u), dtype=float)
            B = np.empty((ph.state_dim, len(chans), K))
            for j, c in enumerate(chans):
                e = np.zeros((m, K))
                e[c] = 1.0
                B[:, j, :] = np.asarray(ph.dynamics(t0 + t, x, e), dtype=float) - f0
            rhs = xdot - f0
            for k in range(K):
                u[chans, k] = np.linalg.lstsq(B[:, :, k], rhs[:, k], rcond=None)[0]
            u = np.clip(u, ph.control_lower[:, None], ph.control_upper[:, None])
        return u

    base = _default_waypoints(tr)
    state_fns = [_waypoint_fn(w) for w in base]
    control_fns = [_zero_controls(tr, p) for p in range(tr.n_phases)]
    state_fns[phase], control_fns[phase] = state_fn, control_fn
    durations = [q.nominal_duration for q in tr.phases]
    z = tr.encode_functions(state_fns, control_fns, durations)
    return _add_noise(tr, z, noise, seed)
