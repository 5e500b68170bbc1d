"""Independent checks of finished solutions.

:func:`resimulate` integrates the solution's controls open loop with the
adaptive integrator and compares the result with the solution's own states.
Open-loop errors are allowed to grow exponentially in time: a sample passes
when its error is at most ``scale_cap * exp(growth_cap * (t - t0)) * tol_base``.
A regression fit ``C * exp(lam * t)`` of the observed errors is reported
alongside, but the pass decision uses the caps only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from trajopt.integrate import NonFiniteError, StepSizeError, adaptive_rk45
from trajopt.ocp import Problem, Trajectory


@dataclass(frozen=True)
class VerificationReport:
    times: np.ndarray
    errors: np.ndarray
    max_error: float
    growth_fit: tuple[float, float]  # (C, lam) with errors ~ C * tol_base * exp(lam * (t - t0))
    passed: bool
    defect_max: float = float("nan")
    failure: Optional[str] = None

    def as_dict(self) -> dict:
        return {"max_error": self.max_error, "pass": self.passed}


def _fit_growth(times, errors, t0, tol_base):
    keep = errors > 1e-12
    if np.count_nonzero(keep) < 2 or np.ptp(times[keep]) == 0:
        c = float(errors.max() / tol_base) if errors.size else 0.0
        return (c, 0.0)
    lam, intercept = np.polyfit(times[keep] - t0, np.log(errors[keep]), 1)
    return (float(np.exp(intercept) / tol_base), float(lam))


def _sample_error(x_sim, x_ref):
    scale = np.maximum(1.0, np.abs(x_ref))
    return np.max(np.abs(x_sim - x_ref) / scale, axis=0)


def resimulate(problem: Problem, solution: Trajectory, rel_tol: float = 1e-10, abs_tol: float = 1e-12,
               tol_base: float = 1e-4, growth_cap: float = 5.0, scale_cap: float = 10.0,
               defect_max: float = float("nan")) -> VerificationReport:
    """Re-simulate every phase, chaining through the transition maps."""
    t0 = solution.phases[0].t0
    times, errors = [], []
    failure = None
    x = solution.x_start
    for p, (ph, sol) in enumerate(zip(problem.phases, solution.phases)):
        if p > 0:
            x = np.asarray(problem.transitions[p - 1](x), dtype=float)
        t_a, t_b = sol.t0, sol.tf
        try:
            dense = adaptive_rk45(ph.dynamics, t_a, x, t_b, sol.control, rel_tol=rel_tol, abs_tol=abs_tol)
        except (StepSizeError, NonFiniteError) as exc:
            failure = f"phase {p}: {exc}"
            break
        x_sim = dense(sol.t)
        times.append(sol.t)
        errors.append(_sample_error(x_sim, sol.x))
        x = dense.final
    if times:
        times_a, errors_a = np.concatenate(times), np.concatenate(errors)
    else:
        times_a, errors_a = np.zeros(0), np.zeros(0)
    max_error = float(errors_a.max()) if errors_a.size else 0.0
    envelope = scale_cap * np.exp(growth_cap * (times_a - t0)) * tol_base
    passed = failure is None and bool(np.all(errors_a <= envelope))
    return VerificationReport(
        times=times_a,
        errors=errors_a,
        max_error=max_error if failure is None else float("inf"),
        growth_fit=_fit_growth(times_a, errors_a, t0, tol_base),
        passed=passed,
        defect_max=defect_max,
        failure=failure,
    )


def defect_report(transcription, z) -> float:
    """Largest absolute defect (dynamics, knot and transition rows)."""
    rows = transcription.defect_index_map
    if rows.size == 0:
        return 0.0
    cons = transcription.nlp.constraints(np.asarray(z, dtype=float))
    return float(np.max(np.abs(cons[rows])))
