"""Simultaneous methods: every grid node carries its own state variables.

Three flavours share the node bookkeeping here:

* direct transcription, one explicit Euler step per interval with a
  hold-constant control;
* direct collocation, Hermite cubic states with linear controls and a
  midpoint defect (Hermite-Simpson);
* orthogonal collocation, a Chebyshev-Lobatto polynomial per segment with
  derivative defects at every node and continuity rows at the knots.
"""

from __future__ import annotations

import numpy as np

from trajopt.chebyshev import ChebGrid, scale_to_interval
from trajopt.integrate import ControlInterpolant, HOLD, LINEAR
from trajopt.ocp import PolynomialControl, Trajectory
from trajopt.packing import FieldSpec, unpack
from trajopt.transcribe.base import (
    DIRECT_COLLOCATION,
    DIRECT_TRANSCRIPTION,
    ORTHOGONAL_COLLOCATION,
    Transcription,
)


class _NodeMethod(Transcription):
    """States at every node; subclasses supply the defect and quadrature rules."""

    def _fields(self):
        fields = [FieldSpec(f"x{p}", ph.state_dim, len(self.state_taus(p)))
                  for p, ph in enumerate(self.phases)]
        return fields + self._control_fields() + self._duration_fields()

    def _node_controls(self, U, p):
        """Control value at every state node, shape (m, K)."""
        return U

    def _node_control_idx(self, p):
        return self.control_idx(p)

    # subclass hooks: structure and values of defect rows / cost terms for one phase
    def _declare_phase(self, p):
        raise NotImplementedError

    def _phase_rows(self, p, X, U, T, t0):
        """Return (defect block, knot block or None, list of cost terms)."""
        raise NotImplementedError

    def _declare(self):
        for p in range(self.n_phases):
            self._declare_phase(p)
        self._declare_links()
        for p, ph in enumerate(self.phases):
            if ph.path_constraint is None:
                continue
            ix, iu, dd = self.state_idx(p), self._node_control_idx(p), self.duration_deps(p)
            K = ix.shape[1]
            deps = []
            for k in range(K):
                deps += [np.concatenate([ix[:, k], iu[:, k], dd])] * ph.n_path
            self._add("path", deps, np.tile(ph.path_lower, K), np.tile(ph.path_upper, K))
        self._declare_boundary()

    def _declare_links(self):
        P = self.n_phases
        for k in range(len(self.problem.transitions)):
            src, dst = k, (k + 1) % P
            src_end = self.state_idx(src)[:, -1]
            ix_d = self.state_idx(dst)
            self._add("transition", [np.append(src_end, ix_d[i, 0]) for i in range(ix_d.shape[0])], 0.0, 0.0)

    def boundary_deps(self):
        last = self.n_phases - 1
        return np.concatenate([self.state_idx(0)[:, 0], self.state_idx(last)[:, -1], self.duration_deps(last)])

    def _evaluate(self, vals):
        T = self.durations(vals)
        starts = self.phase_starts(T)
        terms = []
        blocks = {"defect": [], "knot": [], "transition": [], "path": [], "boundary": []}
        for p in range(self.n_phases):
            X, U = vals[f"x{p}"], self.controls(vals, p)
            defect, knot, cost = self._phase_rows(p, X, U, T[p], starts[p])
            blocks["defect"].append(defect)
            if knot is not None:
                blocks["knot"].append(knot)
            terms += cost
        P = self.n_phases
        for k, Tmap in enumerate(self.problem.transitions):
            src, dst = k, (k + 1) % P
            x_minus = vals[f"x{src}"][:, -1]
            blocks["transition"].append(vals[f"x{dst}"][:, 0] - np.asarray(Tmap(x_minus), dtype=float))
        for p, ph in enumerate(self.phases):
            if ph.path_constraint is None:
                continue
            t = starts[p] + T[p] * self.state_taus(p)
            X = vals[f"x{p}"]
            Un = self._node_controls(self.controls(vals, p), p)
            blocks["path"].append(
                np.asarray(ph.path_constraint(t, X, Un), dtype=float).reshape(ph.n_path, -1))
        b, mayer = self._boundary_values(vals["x0"][:, 0], vals[f"x{P - 1}"][:, -1], T)
        blocks["boundary"].append(b)
        return terms + mayer, blocks

    def _rate(self, p, T, t0):
        """Dynamics and running cost on the normalised clock."""
        ph = self.phases[p]
        f = lambda tau, x, u: T * np.asarray(ph.dynamics(t0 + T * tau, x, u), dtype=float)
        g = lambda tau, x, u: T * np.broadcast_to(np.asarray(ph.cost(t0 + T * tau, x, u), dtype=float),
                                                  np.shape(tau))
        return f, g

    def _control_object(self, p, U, t0, T):
        raise NotImplementedError

    def decode(self, z):
        vals = unpack(self.layout, z)
        T = self.durations(vals)
        starts = self.phase_starts(T)
        phases = []
        for p, ph in enumerate(self.phases):
            tau = self.state_taus(p)
            U = self.controls(vals, p)
            control = self._control_object(p, U, starts[p], T[p]) if ph.control_dim else None
            phases.append(self.phase_trajectory(p, tau, vals[f"x{p}"].copy(),
                                                self._node_controls(U, p), control, T[p], starts[p]))
        return Trajectory(tuple(phases))


class DirectTranscription(_NodeMethod):
    """Explicit Euler integral defects with a hold-constant control."""

    method = DIRECT_TRANSCRIPTION

    def state_taus(self, p):
        return np.arange(self.segments[p] + 1) / self.segments[p]

    def control_taus(self, p):
        return self.state_taus(p)[:-1]

    def control_quadrature(self, p):
        return np.full(self.segments[p], 1.0 / self.segments[p])

    def _node_controls(self, U, p):
        return np.hstack([U, U[:, -1:]])

    def _node_control_idx(self, p):
        iu = self.control_idx(p)
        return np.hstack([iu, iu[:, -1:]])

    def _declare_phase(self, p):
        ix, iu, dd = self.state_idx(p), self.control_idx(p), self.duration_deps(p)
        n = ix.shape[0]
        deps = []
        for k in range(self.segments[p]):
            shared = np.concatenate([ix[:, k], iu[:, k], dd])
            deps += [np.append(shared, ix[i, k + 1]) for i in range(n)]
            self._add_term(shared)
        self._add("defect", deps, 0.0, 0.0)

    def _phase_rows(self, p, X, U, T, t0):
        f, g = self._rate(p, T, t0)
        h = 1.0 / self.segments[p]
        tau = self.state_taus(p)[:-1]
        Xk = X[:, :-1]
        defect = X[:, 1:] - Xk - h * f(tau, Xk, U)
        cost = h * g(tau, Xk, U)
        return defect, None, list(cost)

    def _control_object(self, p, U, t0, T):
        return ControlInterpolant(HOLD, t0 + T * self.state_taus(p), U)


class DirectCollocation(_NodeMethod):
    """Hermite-Simpson collocation.

    With node slopes ``f_k`` the cubic Hermite interpolant on ``[t_k, t_k + h]``
    has, at its midpoint,

        x_m  = (x_k + x_{k+1}) / 2 + h (f_k - f_{k+1}) / 8
        x'_m = 3 (x_{k+1} - x_k) / (2h) - (f_k + f_{k+1}) / 4

    and the defect asks ``x'_m`` to match the dynamics at ``x_m``. The running
    cost uses Simpson's rule on the same three points.
    """

    method = DIRECT_COLLOCATION

    def state_taus(self, p):
        return np.arange(self.segments[p] + 1) / self.segments[p]

    def control_taus(self, p):
        return self.state_taus(p)

    def control_quadrature(self, p):
        N = self.segments[p]
        w = np.full(N + 1, 1.0 / N)
        w[[0, -1]] *= 0.5
        return w

    def _declare_phase(self, p):
        ix, iu, dd = self.state_idx(p), self.control_idx(p), self.duration_deps(p)
        deps = []
        for k in range(self.segments[p]):
            shared = np.concatenate([ix[:, k], ix[:, k + 1], iu[:, k], iu[:, k + 1], dd])
            deps += [shared] * ix.shape[0]
            self._add_term(shared)
        self._add("defect", deps, 0.0, 0.0)

    def _phase_rows(self, p, X, U, T, t0):
        f, g = self._rate(p, T, t0)
        h = 1.0 / self.segments[p]
        tau = self.state_taus(p)
        F = f(tau, X, U)
        G = g(tau, X, U)
        x0, x1, f0, f1 = X[:, :-1], X[:, 1:], F[:, :-1], F[:, 1:]
        tm = tau[:-1] + 0.5 * h
        um = 0.5 * (U[:, :-1] + U[:, 1:])
        xm = 0.5 * (x0 + x1) + (h / 8.0) * (f0 - f1)
        dxm = (1.5 / h) * (x1 - x0) - 0.25 * (f0 + f1)
        defect = dxm - f(tm, xm, um)
        cost = (h / 6.0) * (G[:-1] + 4.0 * g(tm, xm, um) + G[1:])
        return defect, None, list(cost)

    def _control_object(self, p, U, t0, T):
        return ControlInterpolant(LINEAR, t0 + T * self.state_taus(p), U)


class OrthogonalCollocation(_NodeMethod):
    """Chebyshev-Lobatto collocation on each segment (an h-p scheme).

    Nodes of every segment are stored in ascending time. Adjacent segments
    both carry the shared knot time; continuity rows tie their states while
    the controls may jump.
    """

    method = ORTHOGONAL_COLLOCATION

    def _check(self):
        self.order = self.grid.poly_order
        self._unit = ChebGrid.build(self.order)

    def _segment_grid(self, p, j, a=0.0, span=1.0) -> ChebGrid:
        S = self.segments[p]
        return scale_to_interval(self._unit, a + span * j / S, a + span * (j + 1) / S)

    def state_taus(self, p):
        return np.concatenate([self._segment_grid(p, j).points[::-1] for j in range(self.segments[p])])

    control_taus = state_taus

    def control_quadrature(self, p):
        return np.concatenate([self._segment_grid(p, j).quad_weights[::-1] for j in range(self.segments[p])])

    def _declare_phase(self, p):
        ix, iu, dd = self.state_idx(p), self.control_idx(p), self.duration_deps(p)
        n, q = ix.shape[0], self.order + 1
        deps = []
        for j in range(self.segments[p]):
            seg = slice(j * q, (j + 1) * q)
            for i in range(j * q, (j + 1) * q):
                node = np.concatenate([ix[:, i], iu[:, i], dd])
                deps += [np.concatenate([ix[c, seg], node]) for c in range(n)]
            self._add_term(np.concatenate([ix[:, seg].ravel(), iu[:, seg].ravel(), dd]))
        self._add("defect", deps, 0.0, 0.0)
        knots = []
        for j in range(1, self.segments[p]):
            knots += [[ix[c, j * q - 1], ix[c, j * q]] for c in range(n)]
        if knots:
            self._add("knot", knots, 0.0, 0.0)

    def _phase_rows(self, p, X, U, T, t0):
        f, g = self._rate(p, T, t0)
        tau = self.state_taus(p)
        F = f(tau, X, U)
        G = g(tau, X, U)
        q = self.order + 1
        S = self.segments[p]
        defect = np.empty_like(X)
        cost = []
        for j in range(S):
            grid = self._segment_grid(p, j)
            D = grid.diff_matrix[::-1, ::-1]
            seg = slice(j * q, (j + 1) * q)
            defect[:, seg] = X[:, seg] @ D.T - F[:, seg]
            cost.append(float(grid.quad_weights[::-1] @ G[seg]))
        knot = X[:, q::q] - X[:, q - 1:-1:q] if S > 1 else None
        return defect, knot, cost

    def _control_object(self, p, U, t0, T):
        q = self.order + 1
        grids, values = [], []
        for j in range(self.segments[p]):
            grids.append(self._segment_grid(p, j, t0, T))
            values.append(U[:, j * q:(j + 1) * q][:, ::-1].copy())
        return PolynomialControl(tuple(grids), tuple(values))
