"""Single and multiple shooting.

Controls are sampled at segment boundaries: one value per segment for a
hold-constant parameterisation, one per boundary for piecewise-linear. Each
segment is integrated with ``substeps`` fixed steps, so control breakpoints
always fall on integration step boundaries. The running cost rides along as
an extra state through the same integrator.
"""

from __future__ import annotations

import numpy as np

from trajopt.integrate import HOLD, ControlInterpolant, augment_cost_integrand, simulate_segment
from trajopt.packing import FieldSpec, unpack, pack
from trajopt.transcribe.base import (
    MULTIPLE_SHOOTING,
    SINGLE_SHOOTING,
    Transcription,
    TranscriptionError,
)


class _Shooting(Transcription):
    def _check(self):
        self._aug = [augment_cost_integrand(ph.dynamics, ph.cost) for ph in self.phases]
        self._hold = self.grid.control_kind == HOLD

    def node_taus(self, p: int) -> np.ndarray:
        return np.arange(self.segments[p] + 1) / self.segments[p]

    def control_taus(self, p: int) -> np.ndarray:
        taus = self.node_taus(p)
        return taus[:-1] if self._hold else taus

    def control_quadrature(self, p: int) -> np.ndarray:
        N = self.segments[p]
        if self._hold:
            return np.full(N, 1.0 / N)
        w = np.full(N + 1, 1.0 / N)
        w[[0, -1]] *= 0.5
        return w

    def _segment_controls(self, iu: np.ndarray, k: int) -> np.ndarray:
        """Control variable indices that segment ``k`` reads."""
        return iu[:, k] if self._hold else iu[:, k : k + 2]

    def _node_controls(self, iu: np.ndarray, k: int) -> np.ndarray:
        if self._hold:
            return iu[:, min(k, iu.shape[1] - 1)]
        return iu[:, k]

    def _scaled(self, p, T, t0):
        aug = self._aug[p]
        return lambda tau, xa, u: T * aug(t0 + T * tau, xa, u)

    def _node_control_values(self, U):
        return np.hstack([U, U[:, -1:]]) if self._hold else U

    def _control_interpolant(self, U, times):
        kind = "hold-constant" if self._hold else "piecewise-linear"
        return ControlInterpolant(kind, times, U)

    def _path_rows(self, p, t0, T, X_nodes, U_nodes):
        ph = self.phases[p]
        if ph.path_constraint is None:
            return None
        t = t0 + T * self.node_taus(p)
        return np.asarray(ph.path_constraint(t, X_nodes, U_nodes), dtype=float).reshape(ph.n_path, -1)


class MultipleShooting(_Shooting):
    """Segment start states are decision variables, stitched by defects."""

    method = MULTIPLE_SHOOTING

    def _check(self):
        super()._check()
        for p, N in enumerate(self.segments):
            if N < 2:
                raise TranscriptionError(
                    f"multiple shooting needs at least 2 segments per phase (phase {p} has {N}); "
                    "use single_shooting for one segment"
                )

    def _fields(self):
        fields = [FieldSpec(f"x{p}", ph.state_dim, self.segments[p]) for p, ph in enumerate(self.phases)]
        return fields + self._control_fields() + self._duration_fields()

    def state_taus(self, p):
        return self.node_taus(p)[:-1]

    # ------------------------------------------------------------------ structure

    def _declare(self):
        P = self.n_phases
        for p, ph in enumerate(self.phases):
            ix, iu, dd = self.state_idx(p), self.control_idx(p), self.duration_deps(p)
            N = self.segments[p]
            deps = []
            for k in range(1, N):
                shared = np.concatenate([ix[:, k - 1], self._segment_controls(iu, k - 1).ravel(), dd])
                deps += [np.append(shared, ix[i, k]) for i in range(ph.state_dim)]
            self._add("defect", deps, 0.0, 0.0)
            for k in range(N):
                self._add_term(np.concatenate([ix[:, k], self._segment_controls(iu, k).ravel(), dd]))

        for k in range(len(self.problem.transitions)):
            src, dst = k, (k + 1) % P
            ix_s, iu_s = self.state_idx(src), self.control_idx(src)
            shared = np.concatenate([ix_s[:, -1], self._segment_controls(iu_s, self.segments[src] - 1).ravel(),
                                     self.duration_deps(src)])
            ix_d = self.state_idx(dst)
            self._add("transition", [np.append(shared, ix_d[i, 0]) for i in range(ix_d.shape[0])], 0.0, 0.0)

        for p, ph in enumerate(self.phases):
            if ph.path_constraint is None:
                continue
            ix, iu, dd = self.state_idx(p), self.control_idx(p), self.duration_deps(p)
            N = self.segments[p]
            deps = []
            for k in range(N + 1):
                if k < N:
                    d = np.concatenate([ix[:, k], self._node_controls(iu, k).ravel(), dd])
                else:
                    d = np.concatenate([ix[:, N - 1], self._segment_controls(iu, N - 1).ravel(), dd])
                deps += [d] * ph.n_path
            self._add("path", deps, np.tile(ph.path_lower, N + 1), np.tile(ph.path_upper, N + 1))
        self._declare_boundary()

    def boundary_deps(self):
        last = self.n_phases - 1
        ix0, ixl, iul = self.state_idx(0), self.state_idx(last), self.control_idx(last)
        return np.concatenate([ix0[:, 0], ixl[:, -1], self._segment_controls(iul, self.segments[last] - 1).ravel(),
                               self.duration_deps(last)])

    # ------------------------------------------------------------------ evaluation

    def simulate(self, vals):
        """Simulate every segment of every phase; returns per-phase (ends, costs)."""
        T = self.durations(vals)
        starts = self.phase_starts(T)
        out = []
        S, method = self.grid.substeps, self.grid.integrator
        for p, ph in enumerate(self.phases):
            N = self.segments[p]
            X = vals[f"x{p}"]
            U = self.controls(vals, p)
            seg_tau = np.arange(N) / N
            xa0 = np.vstack([X, np.zeros((1, N))])
            if self._hold:
                ufun = lambda tau, U=U: U
            else:
                U0, dU = U[:, :-1], U[:, 1:] - U[:, :-1]
                ufun = lambda tau, U0=U0, dU=dU, seg_tau=seg_tau, N=N: U0 + ((tau - seg_tau) * N) * dU
            h = 1.0 / (N * S)
            trace = simulate_segment(self._scaled(p, T[p], starts[p]), seg_tau, xa0, ufun, S, h, method)
            end = trace.final
            out.append((end[:-1], end[-1]))
        return out, T, starts

    def _evaluate(self, vals):
        sims, T, starts = self.simulate(vals)
        terms = [cost for _, cost in sims]
        blocks = {"defect": [], "transition": [], "path": [], "boundary": []}
        for p in range(self.n_phases):
            X = vals[f"x{p}"]
            xhat = sims[p][0]
            blocks["defect"].append(X[:, 1:] - xhat[:, :-1])
        P = self.n_phases
        for k, Tmap in enumerate(self.problem.transitions):
            src, dst = k, (k + 1) % P
            x_minus = sims[src][0][:, -1]
            blocks["transition"].append(vals[f"x{dst}"][:, 0] - np.asarray(Tmap(x_minus), dtype=float))
        for p, ph in enumerate(self.phases):
            if ph.path_constraint is None:
                continue
            X_nodes = np.hstack([vals[f"x{p}"], sims[p][0][:, -1:]])
            U_nodes = self._node_control_values(self.controls(vals, p))
            blocks["path"].append(self._path_rows(p, starts[p], T[p], X_nodes, U_nodes))
        x0 = vals["x0"][:, 0]
        xf = sims[-1][0][:, -1]
        b, mayer = self._boundary_values(x0, xf, T)
        blocks["boundary"].append(b)
        return terms + mayer, blocks

    def decode(self, z):
        from trajopt.ocp import Trajectory

        vals = unpack(self.layout, z)
        sims, T, starts = self.simulate(vals)
        phases = []
        for p, ph in enumerate(self.phases):
            tau = self.node_taus(p)
            x = np.hstack([vals[f"x{p}"], sims[p][0][:, -1:]])
            U = self.controls(vals, p)
            times = starts[p] + T[p] * tau
            control = self._control_interpolant(U, times) if ph.control_dim else None
            phases.append(self.phase_trajectory(p, tau, x, self._node_control_values(U), control, T[p], starts[p]))
        return Trajectory(tuple(phases))

    def consistent_states(self, z) -> np.ndarray:
        """Overwrite segment start states with the simulation of the controls.

        Every segment start (except the very first state, and the first state of
        a periodic problem) is replaced by the simulated end of its predecessor,
        chaining through transition maps. The resulting ``z`` has zero defects.
        """
        vals = unpack(self.layout, z)
        for p in range(self.n_phases):
            if p > 0:
                sims, _, _ = self.simulate(vals)
                vals[f"x{p}"][:, 0] = self.problem.transitions[p - 1](sims[p - 1][0][:, -1])
            for k in range(1, self.segments[p]):
                sims, _, _ = self.simulate(vals)
                vals[f"x{p}"][:, k] = sims[p][0][:, k - 1]
        return pack(self.layout, vals)


class SingleShooting(_Shooting):
    """One simulation per phase from the (partly free) initial state."""

    method = SINGLE_SHOOTING

    def _check(self):
        super()._check()
        x_init = self.problem.initial_state
        n = self.phases[0].state_dim
        self._free0 = np.ones(n, dtype=bool) if x_init is None else np.isnan(x_init)

    def _fields(self):
        fields = []
        if self._free0.any():
            fields.append(FieldSpec("xinit", int(self._free0.sum()), 1))
        return fields + self._control_fields() + self._duration_fields()

    def state_taus(self, p):
        return self.node_taus(p)

    def _bounds(self):
        lb, ub = super()._bounds()
        if "xinit" in self.layout:
            ix = self.layout.indices("xinit")[:, 0]
            lb[ix] = self.phases[0].state_lower[self._free0]
            ub[ix] = self.phases[0].state_upper[self._free0]
        return lb, ub

    def _encode_extra(self, values, state_fns, control_fns):
        if "xinit" in self.layout:
            x0 = np.asarray(state_fns[0](np.array([0.0])), dtype=float).reshape(-1)
            values["xinit"] = x0[self._free0][:, None]

    def _upstream(self, p, k_segments=None):
        """Variables that influence phase ``p`` up to (and including) segment ``k_segments - 1``."""
        parts = [self.idx("xinit").ravel()]
        for q in range(p):
            parts.append(self.control_idx(q).ravel())
        iu = self.control_idx(p)
        if k_segments is None:
            parts.append(iu.ravel())
        elif k_segments > 0:
            stop = k_segments if self._hold else k_segments + 1
            parts.append(iu[:, :stop].ravel())
        parts.append(self.duration_deps(p))
        return np.concatenate(parts).astype(int)

    def _declare(self):
        P = self.n_phases
        for p in range(P):
            self._add_term(self._upstream(p))
        if self.problem.periodic:
            everything = self._upstream(P - 1)
            n0 = self.phases[0].state_dim
            self._add("transition", [everything] * n0, 0.0, 0.0)
        for p, ph in enumerate(self.phases):
            if ph.path_constraint is None:
                continue
            N = self.segments[p]
            deps = []
            for k in range(N + 1):
                d = self._upstream(p, k)
                d = np.concatenate([d, self._node_controls(self.control_idx(p), min(k, N - 1 if self._hold else N)).ravel()])
                deps += [d] * ph.n_path
            self._add("path", deps, np.tile(ph.path_lower, N + 1), np.tile(ph.path_upper, N + 1))
        self._declare_boundary()

    def boundary_deps(self):
        return self._upstream(self.n_phases - 1)

    def initial_state(self, vals):
        x_init = self.problem.initial_state
        n = self.phases[0].state_dim
        x0 = np.zeros(n) if x_init is None else np.where(np.isnan(x_init), 0.0, x_init)
        if "xinit" in vals:
            x0 = x0.copy()
            x0[self._free0] = vals["xinit"][:, 0]
        return x0

    def simulate(self, vals):
        T = self.durations(vals)
        starts = self.phase_starts(T)
        S, method = self.grid.substeps, self.grid.integrator
        x = self.initial_state(vals)
        out = []
        for p, ph in enumerate(self.phases):
            if p > 0:
                x = np.asarray(self.problem.transitions[p - 1](x), dtype=float)
            N = self.segments[p]
            U = self.controls(vals, p)
            u = self._control_interpolant(U, self.node_taus(p)) if ph.control_dim else None
            h = 1.0 / (N * S)
            trace = simulate_segment(self._scaled(p, T[p], starts[p]), 0.0, np.append(x, 0.0), u, N * S, h, method)
            nodes = trace.states[::S].T  # (n+1, N+1)
            out.append((nodes[:-1], nodes[-1, -1]))
            x = nodes[:-1, -1]
        return out, T, starts

    def _evaluate(self, vals):
        sims, T, starts = self.simulate(vals)
        terms = [np.array([cost]) for _, cost in sims]
        blocks = {"transition": [], "path": [], "boundary": []}
        if self.problem.periodic:
            x_end = sims[-1][0][:, -1]
            blocks["transition"].append(sims[0][0][:, 0] - np.asarray(self.problem.transitions[-1](x_end), dtype=float))
        for p, ph in enumerate(self.phases):
            if ph.path_constraint is None:
                continue
            U_nodes = self._node_control_values(self.controls(vals, p))
            blocks["path"].append(self._path_rows(p, starts[p], T[p], sims[p][0], U_nodes))
        b, mayer = self._boundary_values(sims[0][0][:, 0], sims[-1][0][:, -1], T)
        blocks["boundary"].append(b)
        return terms + mayer, blocks

    def decode(self, z):
        from trajopt.ocp import Trajectory

        vals = unpack(self.layout, z)
        sims, T, starts = self.simulate(vals)
        phases = []
        for p, ph in enumerate(self.phases):
            tau = self.node_taus(p)
            U = self.controls(vals, p)
            times = starts[p] + T[p] * tau
            control = self._control_interpolant(U, times) if ph.control_dim else None
            phases.append(self.phase_trajectory(p, tau, sims[p][0], self._node_control_values(U), control, T[p], starts[p]))
        return Trajectory(tuple(phases))
