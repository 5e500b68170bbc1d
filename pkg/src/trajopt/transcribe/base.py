"""Shared machinery for all transcriptions.

Each phase runs on a normalised clock ``tau`` in ``[0, 1]``; the phase
duration ``T`` is either fixed or a decision variable, and dynamics are
evaluated as ``dx/dtau = T * f(t0 + T*tau, x, u)``. Grids therefore stay fixed
while durations move.

Constraint rows are laid out by kind, in this order::

    defect, knot, transition, path, boundary

and within a kind by phase. Subclasses declare the dependency set of every
row (used as the Jacobian sparsity pattern) and evaluate blocks in the same
order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from trajopt.integrate import CONTROL_KINDS, HOLD, LINEAR
from trajopt.nlp.problem import LinearRows, NlpProblem, pattern_from_rows
from trajopt.ocp import PhaseTrajectory, Problem, Trajectory, validate
from trajopt.packing import FieldSpec, Layout, layout_build, unpack

SINGLE_SHOOTING = "single_shooting"
MULTIPLE_SHOOTING = "multiple_shooting"
DIRECT_TRANSCRIPTION = "direct_transcription"
DIRECT_COLLOCATION = "direct_collocation"
ORTHOGONAL_COLLOCATION = "orthogonal_collocation"
METHODS = (SINGLE_SHOOTING, MULTIPLE_SHOOTING, DIRECT_TRANSCRIPTION,
           DIRECT_COLLOCATION, ORTHOGONAL_COLLOCATION)

ROW_KINDS = ("defect", "knot", "transition", "path", "boundary")
DEFECT_KINDS = ("defect", "knot", "transition")

DEFAULT_SUBSTEPS = 4


class TranscriptionError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    method: str
    segments: int | tuple[int, ...] = 20
    substeps: int = DEFAULT_SUBSTEPS
    integrator: str = "rk4"
    control_kind: Optional[str] = None  # per-method default when omitted
    poly_order: Optional[int] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise TranscriptionError(
                f"unknown method {self.method!r}; choose from {', '.join(METHODS)}"
            )
        segs = (self.segments,) if np.isscalar(self.segments) else tuple(self.segments)
        object.__setattr__(self, "segments", tuple(int(s) for s in segs))
        if any(s < 1 for s in self.segments):
            raise TranscriptionError("segment counts must be positive")
        if self.substeps < 1:
            raise TranscriptionError("substeps must be at least 1")
        if self.integrator not in ("euler", "rk4"):
            raise TranscriptionError(f"unknown integrator {self.integrator!r}")
        if self.control_kind is None:
            object.__setattr__(self, "control_kind", HOLD if self.method == DIRECT_TRANSCRIPTION else LINEAR)
        if self.control_kind not in CONTROL_KINDS:
            raise TranscriptionError(f"unknown control kind {self.control_kind!r}")
        fixed = {DIRECT_TRANSCRIPTION: HOLD, DIRECT_COLLOCATION: LINEAR}.get(self.method)
        if fixed is not None and self.control_kind != fixed:
            raise TranscriptionError(f"{self.method} requires {fixed} controls")
        if self.method == ORTHOGONAL_COLLOCATION:
            if self.poly_order is None or self.poly_order < 2:
                raise TranscriptionError("orthogonal collocation needs poly_order >= 2")
        elif self.poly_order is not None:
            raise TranscriptionError("poly_order only applies to orthogonal collocation")

    def segments_for(self, n_phases: int) -> tuple[int, ...]:
        if len(self.segments) == 1:
            return self.segments * n_phases
        if len(self.segments) != n_phases:
            raise TranscriptionError(
                f"grid gives {len(self.segments)} segment counts for {n_phases} phases"
            )
        return self.segments

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "segments": list(self.segments),
            "substeps": self.substeps,
            "integrator": self.integrator,
            "control_kind": self.control_kind,
            "poly_order": self.poly_order,
        }


def _interp_rows(tau_src, values, tau):
    """Linear interpolation of each row of ``values`` (exact copy on identical grids)."""
    tau = np.asarray(tau, dtype=float)
    if values.shape[0] == 0:
        return np.zeros((0, tau.size))
    if tau_src.shape == tau.shape and np.array_equal(tau_src, tau):
        return values.copy()
    return np.vstack([np.interp(tau, tau_src, row) for row in values])


class Transcription:
    """A problem converted to an :class:`NlpProblem` on a fixed grid."""

    method: str = ""

    def __init__(self, problem: Problem, grid: GridSpec):
        issues = validate(problem)
        if issues:
            raise TranscriptionError("invalid problem: " + "; ".join(issues))
        if grid.method != self.method:
            raise TranscriptionError(f"grid method {grid.method!r} does not match {self.method!r}")
        self.problem = problem
        self.grid = grid
        self.phases = problem.phases
        self.n_phases = len(problem.phases)
        self.segments = grid.segments_for(self.n_phases)
        self._check()
        self.layout: Layout = layout_build(self._fields())
        self._blocks = {k: [] for k in ROW_KINDS}
        self._term_deps: list = []
        self._declare()
        self.nlp: NlpProblem = self._assemble()

    # ------------------------------------------------------------------ hooks

    def _check(self):
        pass

    def _fields(self) -> list[FieldSpec]:
        raise NotImplementedError

    def _declare(self):
        raise NotImplementedError

    def _evaluate(self, vals: dict) -> tuple[list, dict]:
        raise NotImplementedError

    def decode(self, z) -> Trajectory:
        raise NotImplementedError

    def state_taus(self, p: int) -> np.ndarray:
        raise NotImplementedError

    def control_taus(self, p: int) -> np.ndarray:
        raise NotImplementedError

    def control_quadrature(self, p: int) -> np.ndarray:
        """Normalised-time weights of the control samples of phase ``p``."""
        raise NotImplementedError

    # ------------------------------------------------------------------ helpers

    def idx(self, name: str) -> np.ndarray:
        if name in self.layout:
            return self.layout.indices(name)
        return np.zeros((0, 0), dtype=int)

    def state_idx(self, p: int) -> np.ndarray:
        return self.idx(f"x{p}")

    def control_idx(self, p: int) -> np.ndarray:
        if f"u{p}" in self.layout:
            return self.layout.indices(f"u{p}")
        return np.zeros((0, len(self.control_taus(p))), dtype=int)

    def duration_deps(self, p: int) -> np.ndarray:
        """Duration variables that the clock of phase ``p`` depends on."""
        out = [self.layout.indices(f"T{q}").ravel() for q in range(p + 1) if f"T{q}" in self.layout]
        return np.concatenate(out) if out else np.zeros(0, dtype=int)

    def _add(self, kind: str, deps: Sequence, lower, upper):
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (len(deps),))
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (len(deps),))
        self._blocks[kind].append((list(deps), lower, upper))

    def _add_term(self, deps):
        self._term_deps.append(np.asarray(deps, dtype=int))

    def durations(self, vals: dict) -> np.ndarray:
        out = np.empty(self.n_phases)
        for p, ph in enumerate(self.phases):
            out[p] = vals[f"T{p}"][0, 0] if f"T{p}" in vals else ph.duration_bounds[0]
        return out

    def phase_starts(self, durations: np.ndarray) -> np.ndarray:
        return self.problem.t0 + np.concatenate([[0.0], np.cumsum(durations)[:-1]])

    def controls(self, vals: dict, p: int) -> np.ndarray:
        key = f"u{p}"
        if key in vals:
            return vals[key]
        return np.zeros((0, len(self.control_taus(p))))

    def _duration_fields(self) -> list[FieldSpec]:
        return [FieldSpec(f"T{p}", 1, 1) for p, ph in enumerate(self.phases) if not ph.fixed_duration]

    def _control_fields(self) -> list[FieldSpec]:
        out = []
        for p, ph in enumerate(self.phases):
            if ph.control_dim > 0:
                out.append(FieldSpec(f"u{p}", ph.control_dim, len(self.control_taus(p))))
        return out

    def boundary_deps(self) -> np.ndarray:
        raise NotImplementedError

    def _declare_boundary(self):
        prob = self.problem
        deps = self.boundary_deps()
        if prob.boundary is not None:
            self._add("boundary", [deps] * prob.n_boundary, prob.boundary_lower, prob.boundary_upper)
        if prob.mayer_cost is not None:
            self._add_term(deps)

    def _boundary_values(self, x0, xf, durations):
        prob = self.problem
        t0 = prob.t0
        tf = t0 + float(np.sum(durations))
        b = (np.atleast_1d(np.asarray(prob.boundary(t0, x0, tf, xf), dtype=float))
             if prob.boundary is not None else np.zeros(0))
        mayer = ([np.array([float(prob.mayer_cost(t0, x0, tf, xf))])]
                 if prob.mayer_cost is not None else [])
        return b, mayer

    # ------------------------------------------------------------------ assembly

    def _bounds(self):
        lb = np.full(self.layout.total_len, -np.inf)
        ub = np.full(self.layout.total_len, np.inf)
        for p, ph in enumerate(self.phases):
            if f"x{p}" in self.layout:
                ix = self.layout.indices(f"x{p}")
                lb[ix] = ph.state_lower[:, None]
                ub[ix] = ph.state_upper[:, None]
            if f"u{p}" in self.layout:
                iu = self.layout.indices(f"u{p}")
                lb[iu] = ph.control_lower[:, None]
                ub[iu] = ph.control_upper[:, None]
            if f"T{p}" in self.layout:
                it = self.layout.indices(f"T{p}")[0, 0]
                lb[it], ub[it] = ph.duration_bounds
        x_init = self.problem.initial_state
        if x_init is not None and "x0" in self.layout:
            first = self.layout.indices("x0")[:, 0]
            fixed = ~np.isnan(x_init)
            lb[first[fixed]] = x_init[fixed]
            ub[first[fixed]] = x_init[fixed]
        return lb, ub

    def _constant_control_rows(self) -> Optional[LinearRows]:
        rows, cols, vals = [], [], []
        r = 0
        for p, ph in enumerate(self.phases):
            if not ph.constant_controls:
                continue
            iu = self.control_idx(p)
            nxt = self.control_idx(p + 1) if p + 1 < self.n_phases else None
            for c in ph.constant_controls:
                chain = list(iu[c])
                for a, b in zip(chain[:-1], chain[1:]):
                    rows += [r, r]
                    cols += [b, a]
                    vals += [1.0, -1.0]
                    r += 1
                if nxt is not None and c in self.phases[p + 1].constant_controls:
                    rows += [r, r]
                    cols += [nxt[c, 0], chain[-1]]
                    vals += [1.0, -1.0]
                    r += 1
        if r == 0:
            return None
        A = sp.csr_matrix((vals, (rows, cols)), shape=(r, self.layout.total_len))
        return LinearRows(A, np.zeros(r), np.zeros(r))

    def _reg_weights(self) -> np.ndarray:
        w = np.zeros(self.layout.total_len)
        for p, ph in enumerate(self.phases):
            if f"u{p}" in self.layout:
                iu = self.layout.indices(f"u{p}")
                w[iu] = self.control_quadrature(p)[None, :] * ph.nominal_duration
        return w

    def _assemble(self) -> NlpProblem:
        rows, lo, hi = [], [], []
        self.row_index: dict[str, np.ndarray] = {}
        start = 0
        for kind in ROW_KINDS:
            count = 0
            for deps, l, u in self._blocks[kind]:
                rows += deps
                lo.append(l)
                hi.append(u)
                count += len(deps)
            self.row_index[kind] = np.arange(start, start + count)
            start += count
        n = self.layout.total_len
        lower, upper = self._bounds()
        self.defect_index_map = np.concatenate([self.row_index[k] for k in DEFECT_KINDS])
        self._n_rows = start
        self._n_terms = len(self._term_deps)
        return NlpProblem(
            n_vars=n,
            evaluate=self.evaluate,
            lower=lower,
            upper=upper,
            con_lower=np.concatenate(lo) if lo else np.zeros(0),
            con_upper=np.concatenate(hi) if hi else np.zeros(0),
            term_sparsity=pattern_from_rows(self._term_deps, n),
            sparsity=pattern_from_rows(rows, n),
            linear=self._constant_control_rows(),
            layout=self.layout,
            reg_weights=self._reg_weights(),
        )

    def evaluate(self, z) -> tuple[np.ndarray, np.ndarray]:
        vals = unpack(self.layout, z)
        terms, blocks = self._evaluate(vals)
        flat_terms = np.concatenate([np.ravel(t) for t in terms]) if terms else np.zeros(0)
        parts = []
        for kind in ROW_KINDS:
            parts += [np.ravel(b, order="F") for b in blocks.get(kind, [])]
        cons = np.concatenate(parts) if parts else np.zeros(0)
        if flat_terms.size != self._n_terms or cons.size != self._n_rows:
            raise RuntimeError(
                f"{self.method}: evaluated {flat_terms.size} terms / {cons.size} rows, "
                f"declared {self._n_terms} / {self._n_rows}"
            )
        return flat_terms, cons

    # ------------------------------------------------------------------ guesses

    def encode_functions(self, state_fns, control_fns, durations) -> np.ndarray:
        """Build ``z`` from per-phase callables of normalised phase time."""
        from trajopt.packing import pack

        values = {}
        for p, ph in enumerate(self.phases):
            if f"x{p}" in self.layout:
                values[f"x{p}"] = np.asarray(state_fns[p](self.state_taus(p)), dtype=float).reshape(
                    ph.state_dim, -1)
            if f"u{p}" in self.layout:
                values[f"u{p}"] = np.asarray(control_fns[p](self.control_taus(p)), dtype=float).reshape(
                    ph.control_dim, -1)
            if f"T{p}" in self.layout:
                lo, hi = ph.duration_bounds
                values[f"T{p}"] = np.array([[np.clip(durations[p], lo, hi)]])
        self._encode_extra(values, state_fns, control_fns)
        return pack(self.layout, values)

    def _encode_extra(self, values, state_fns, control_fns):
        pass

    def encode(self, traj: Trajectory) -> np.ndarray:
        """Sample a trajectory onto this grid (piecewise-linear in phase time)."""
        state_fns, control_fns = [], []
        for ph in traj.phases:
            state_fns.append(lambda tau, ph=ph: _interp_rows(ph.tau, ph.x, tau))
            control_fns.append(lambda tau, ph=ph: _interp_rows(ph.tau, ph.u, tau))
        return self.encode_functions(state_fns, control_fns, traj.durations)

    def phase_trajectory(self, p, tau, x, u, control, duration, t0) -> PhaseTrajectory:
        return PhaseTrajectory(t=t0 + duration * tau, x=x, u=u, control=control,
                               duration=float(duration), tau=tau)

    def regularized(self, weight: float) -> "Transcription":
        from trajopt.transcribe.regularize import add_regularization

        return add_regularization(self, weight)
