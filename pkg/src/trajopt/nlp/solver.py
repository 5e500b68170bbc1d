"""Augmented-Lagrangian solver for :class:`NlpProblem`.

Every constraint row ``l <= c_i(z) <= u`` (equalities have ``l == u``) enters
the augmented Lagrangian through the shifted projection

    r_i = s_i - clip(s_i, l_i, u_i),    s_i = c_i + lam_i / rho
    L_A = J + rho/2 * sum(r**2) - sum(lam**2) / (2 rho)

so inequality multipliers are clamped automatically and the update is simply
``lam = rho * r``.

The inner problem is minimised over the variable box with a projected
quasi-Newton method. The Hessian model is a damped BFGS estimate of the
Lagrangian Hessian plus the exact Gauss-Newton penalty term
``rho * A_act^T A_act``; the latter keeps the steps well scaled as ``rho``
grows, which a plain limited-memory update does poorly.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from trajopt.nlp.fd import DEFAULT_STEP_SCALE, color_columns, fd_jacobian
from trajopt.nlp.problem import NlpProblem

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
FEASIBLE_STALLED = "feasible_stalled"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration_limit"

_RHO_MAX = 1e12


@dataclass
class SolveOptions:
    feas_tol: float = 1e-6
    opt_tol: float = 1e-6
    max_outer: int = 50
    max_inner: int = 500
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    fd_step_scale: float = DEFAULT_STEP_SCALE
    seed: int = 0  # recorded only; the solver draws no random numbers
    threads: int = 1

    def __post_init__(self):
        if not (self.feas_tol > 0 and self.opt_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.penalty_growth > 1:
            raise ValueError("penalty_growth must exceed 1")
        if not self.penalty_init > 0:
            raise ValueError("penalty_init must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be at least 1")


@dataclass
class SolveReport:
    status: str
    outer_iters: int
    inner_iters: int
    objective: float
    max_violation: float
    kkt: float
    history: list = field(default_factory=list)
    penalty: float = 0.0
    multipliers: Optional[np.ndarray] = None

    @property
    def success(self) -> bool:
        return self.status == OPTIMAL


class _Evaluator:
    """Objective terms, constraint rows and their coloured FD Jacobian."""

    def __init__(self, nlp: NlpProblem, opts: SolveOptions, executor):
        self.nlp = nlp
        self.n_terms = nlp.n_terms
        self.pattern = sp.vstack([nlp.term_sparsity, nlp.sparsity]).tocsr()
        self.groups = color_columns(self.pattern)
        self.step_scale = opts.fd_step_scale
        self.executor = executor
        lin = nlp.linear
        self.A_lin = lin.A.toarray() if lin is not None and lin.n_rows else np.zeros((0, nlp.n_vars))
        self.lower = np.concatenate([nlp.con_lower, lin.lower if lin is not None else []])
        self.upper = np.concatenate([nlp.con_upper, lin.upper if lin is not None else []])
        self.n_evals = 0

    def stacked(self, z):
        self.n_evals += 1
        terms, cons = self.nlp.evaluate(z)
        return np.concatenate([terms, cons])

    def values(self, z):
        terms, cons = self.nlp.evaluate(z)
        self.n_evals += 1
        J = float(np.sum(terms))
        c = np.concatenate([cons, self.A_lin @ z])
        return J, c

    def derivatives(self, z):
        jac = fd_jacobian(self.stacked, z, self.pattern, step_scale=self.step_scale,
                          groups=self.groups, executor=self.executor)
        grad = np.asarray(jac[: self.n_terms].sum(axis=0)).ravel()
        A = np.vstack([jac[self.n_terms :].toarray(), self.A_lin])
        return grad, A


def _violation(c, lo, hi):
    if c.size == 0:
        return 0.0
    return float(np.max(np.abs(c - np.clip(c, lo, hi))))


def _projected_gradient(z, g, lb, ub):
    return z - np.clip(z - g, lb, ub)


class _State:
    __slots__ = ("z", "J", "c", "grad", "A")

    def __init__(self, z, J, c, grad, A):
        self.z, self.J, self.c, self.grad, self.A = z, J, c, grad, A


def _merit(J, c, lam, rho, lo, hi):
    s = c + lam / rho
    r = s - np.clip(s, lo, hi)
    return J + 0.5 * rho * float(r @ r) - float(lam @ lam) / (2.0 * rho), r


def _bfgs_update(B, s, y):
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 1e-300:
        return B
    sy = float(s @ y)
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        y = theta * y + (1.0 - theta) * Bs
        sy = float(s @ y)
    if sy <= 1e-300:
        return B
    return B + np.outer(y, y) / sy - np.outer(Bs, Bs) / sBs


def _solve_spd(H, g):
    scale = max(1.0, float(np.max(np.abs(np.diag(H))))) if H.size else 1.0
    mu = 0.0
    n = H.shape[0]
    for _ in range(12):
        try:
            cf = sla.cho_factor(H + mu * np.eye(n), lower=True, check_finite=False)
            d = sla.cho_solve(cf, g, check_finite=False)
            if np.all(np.isfinite(d)):
                return d
        except np.linalg.LinAlgError:
            pass
        mu = 1e-10 * scale if mu == 0.0 else mu * 100.0
    return g / scale


def _inner(ev, st, lam, rho, omega, B, lb, ub, max_inner, counters):
    """Minimise the augmented Lagrangian over the box. Returns (state, B, pg, converged, stalled)."""
    lo, hi = ev.lower, ev.upper
    phi, r = _merit(st.J, st.c, lam, rho, lo, hi)
    fresh_B = counters.get("fresh_B", True)
    pg_norm = np.inf
    for _ in range(max_inner):
        g = st.grad + st.A.T @ (rho * r)
        pg = _projected_gradient(st.z, g, lb, ub)
        pg_norm = float(np.max(np.abs(pg))) if pg.size else 0.0
        if pg_norm <= omega:
            counters["fresh_B"] = fresh_B
            return st, B, pg_norm, True, False
        counters["inner"] += 1

        eps = min(1e-8, pg_norm)
        at_lb = (st.z <= lb + eps) & (g > 0)
        at_ub = (st.z >= ub - eps) & (g < 0)
        free = ~(at_lb | at_ub | (lb == ub))
        active_rows = r != 0.0
        Af = st.A[np.ix_(active_rows, free)]
        H = B[np.ix_(free, free)] + rho * (Af.T @ Af)
        d = np.zeros_like(st.z)
        d[free] = -_solve_spd(H, g[free])

        alpha = 1.0
        accepted = None
        for _ls in range(40):
            zt = np.clip(st.z + alpha * d, lb, ub)
            step = zt - st.z
            if not np.any(step):
                break
            Jt, ct = ev.values(zt)
            if np.isfinite(Jt) and np.all(np.isfinite(ct)):
                phit, rt = _merit(Jt, ct, lam, rho, lo, hi)
                if phit <= phi + 1e-4 * float(g @ step):
                    accepted = (zt, Jt, ct, phit, rt)
                    break
            alpha *= 0.5
        if accepted is None:
            counters["fresh_B"] = fresh_B
            return st, B, pg_norm, False, True

        zt, Jt, ct, phit, rt = accepted
        gradt, At = ev.derivatives(zt)
        lam_hat = rho * rt
        y = (gradt + At.T @ lam_hat) - (st.grad + st.A.T @ lam_hat)
        s = zt - st.z
        if fresh_B:
            sy = float(s @ y)
            if sy > 0:
                B = (float(y @ y) / sy) * np.eye(B.shape[0])
                fresh_B = False
        B = _bfgs_update(B, s, y)
        st = _State(zt, Jt, ct, gradt, At)
        phi, r = phit, rt
    counters["fresh_B"] = fresh_B
    return st, B, pg_norm, False, False


def solve(nlp: NlpProblem, z0, opts: Optional[SolveOptions] = None):
    """Minimise ``nlp`` from ``z0``; returns ``(z, SolveReport)``."""
    opts = opts or SolveOptions()
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (nlp.n_vars,):
        raise ValueError(f"start point has length {z0.size}, expected {nlp.n_vars}")
    lb, ub = nlp.lower, nlp.upper
    z = np.clip(z0, lb, ub)

    executor = ThreadPoolExecutor(opts.threads) if opts.threads > 1 else None
    try:
        ev = _Evaluator(nlp, opts, executor)
        J, c = ev.values(z)
        if not np.isfinite(J):
            raise ValueError("objective is not finite at the start point")
        if not np.all(np.isfinite(c)):
            raise ValueError("constraints are not finite at the start point")
        grad, A = ev.derivatives(z)
        st = _State(z, J, c, grad, A)

        m = c.size
        lam = np.zeros(m)
        rho = opts.penalty_init
        omega0, eta0 = 1e-2, 1e-1
        omega = max(opts.opt_tol, omega0 / rho)
        eta = max(opts.feas_tol, eta0 / rho**0.1)
        B = np.eye(nlp.n_vars)
        counters = {"inner": 0, "fresh_B": True}
        history = []
        status = ITERATION_LIMIT
        pg = np.inf
        stalls = 0
        outer = 0
        for outer in range(1, opts.max_outer + 1):
            st, B, pg, converged, stalled = _inner(
                ev, st, lam, rho, omega, B, lb, ub, opts.max_inner, counters
            )
            v = _violation(st.c, ev.lower, ev.upper)
            history.append((st.J, v))
            log.debug("outer %d: J=%.10g viol=%.3e pg=%.3e rho=%.1e", outer, st.J, v, pg, rho)
            if v <= opts.feas_tol and pg <= opts.opt_tol:
                status = OPTIMAL
                break
            stalls = stalls + 1 if stalled else 0
            if stalled and v <= opts.feas_tol and (pg <= 10 * opts.opt_tol or stalls >= 3):
                status = OPTIMAL if pg <= 10 * opts.opt_tol else FEASIBLE_STALLED
                break
            s = st.c + lam / rho
            if v <= eta:
                lam = rho * (s - np.clip(s, ev.lower, ev.upper))
                eta = max(opts.feas_tol, eta / rho**0.9)
                omega = max(opts.opt_tol, omega / rho)
            else:
                if rho * opts.penalty_growth > _RHO_MAX:
                    status = INFEASIBLE
                    break
                rho *= opts.penalty_growth
                eta = max(opts.feas_tol, eta0 / rho**0.1)
                omega = max(opts.opt_tol, omega0 / rho)
            if stalls >= 3:
                status = FEASIBLE_STALLED if v <= opts.feas_tol else INFEASIBLE
                break
        v = _violation(st.c, ev.lower, ev.upper)
        report = SolveReport(
            status=status,
            outer_iters=outer,
            inner_iters=counters["inner"],
            objective=st.J,
            max_violation=v,
            kkt=float(pg),
            history=history,
            penalty=rho,
            multipliers=lam,
        )
        return st.z.copy(), report
    finally:
        if executor is not None:
            executor.shutdown()
