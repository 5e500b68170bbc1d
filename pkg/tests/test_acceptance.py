"""Acceptance suite: one check per criterion, each reporting a PASS/FAIL line.

Run under pytest (lines appear in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import replace
from functools import lru_cache

import numpy as np
import pytest

from trajopt.chebyshev import ChebGrid, barycentric_interp
from trajopt.cli import main as cli_main
from trajopt.integrate import simulate_segment
from trajopt.nlp import NlpProblem, solve
from trajopt.ocp import build_example
from trajopt.packing import layout_build, pack, unpack
from trajopt.smoothing import abs_via_slacks, smooth_abs, smooth_max
from trajopt.transcribe import GridSpec, initial_guess_linear, transcribe
from trajopt.verify import defect_report, resimulate

REPORT: list[str] = []


def report(number: int, ok: bool, detail: str) -> bool:
    REPORT.append(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    print(REPORT[-1])
    return ok


@lru_cache(maxsize=None)
def solved(name: str, method: str, segments: int, poly_order=None):
    """Transcribe, solve from the straight-line guess, and decode (cached)."""
    prob = build_example(name)
    tr = transcribe(prob, GridSpec(method, segments, poly_order=poly_order))
    z, rep = solve(tr.nlp, initial_guess_linear(tr))
    return prob, tr, z, rep, tr.decode(z)


BLOCK_RUNS = {
    "multiple_shooting (20 seg)": ("block_move", "multiple_shooting", 20, None),
    "direct_transcription (100 nodes)": ("block_move", "direct_transcription", 99, None),
    "direct_collocation (20 nodes)": ("block_move", "direct_collocation", 19, None),
    "orthogonal_collocation (order 6)": ("block_move", "orthogonal_collocation", 1, 6),
}
HAMMER_RUN = ("hammer", "multiple_shooting", 25, None)


def check_1() -> bool:
    _, _, _, rep, traj = solved(*BLOCK_RUNS["multiple_shooting (20 seg)"])
    ph = traj.phases[0]
    u_err = float(np.max(np.abs(ph.u[0] - (6.0 - 12.0 * ph.t))))
    rel = abs(rep.objective - 12.0) / 12.0
    ok = rep.status == "optimal" and rel <= 0.01 and u_err <= 0.2
    return report(1, ok, f"J={rep.objective:.8f} (rel err {rel:.2e} <= 1e-2), max |u-u*|={u_err:.2e} <= 0.2")


def check_2() -> bool:
    _, _, _, rep, _ = solved(*BLOCK_RUNS["orthogonal_collocation (order 6)"])
    err = abs(rep.objective - 12.0)
    return report(2, rep.status == "optimal" and err <= 1e-4, f"|J-12|={err:.2e} <= 1e-4")


def check_3() -> bool:
    J = {k: solved(*v)[3].objective for k, v in BLOCK_RUNS.items()}
    worst = max(abs(a - b) / min(abs(a), abs(b)) for a, b in itertools.combinations(J.values(), 2))
    statuses = all(solved(*v)[3].status == "optimal" for v in BLOCK_RUNS.values())
    detail = ", ".join(f"{k.split()[0]}={v:.6f}" for k, v in J.items())
    return report(3, statuses and worst <= 0.02, f"worst pairwise gap {worst:.2e} <= 2e-2; {detail}")


def check_4() -> bool:
    grow = lambda t, x, u: x
    hs = [2.0**-k for k in range(3, 8)]
    slopes = {}
    for method in ("euler", "rk4"):
        errs = [abs(simulate_segment(grow, 0.0, np.array([1.0]), None, round(1 / h), h, method).final[0] - math.e)
                for h in hs]
        slopes[method] = float(np.polyfit(np.log2(hs), np.log2(errs), 1)[0])
    ok = abs(slopes["euler"] - 1.0) <= 0.1 and abs(slopes["rk4"] - 4.0) <= 0.2
    return report(4, ok, f"euler slope {slopes['euler']:.3f}, rk4 slope {slopes['rk4']:.3f}")


def check_5() -> bool:
    worst = 0.0
    xq = np.linspace(-1, 1, 41)
    for n in (2, 4, 8, 16):
        g = ChebGrid.build(n)
        x = g.points
        for k in range(n + 1):
            worst = max(worst, float(np.max(np.abs(barycentric_interp(g, x**k, xq) - xq**k))))
            dk = k * x ** (k - 1) if k else np.zeros_like(x)
            worst = max(worst, float(np.max(np.abs(g.diff_matrix @ x**k - dk))))
            exact = (1 - (-1) ** (k + 1)) / (k + 1)
            worst = max(worst, abs(float(g.quad_weights @ x**k) - exact))
    return report(5, worst <= 1e-8, f"max error over interp/diff/quad {worst:.2e} <= 1e-8")


def check_6() -> bool:
    rng = np.random.default_rng(20240601)
    failures = 0
    for _ in range(1000):
        k = int(rng.integers(0, 7))
        lay = layout_build([(f"f{i}", int(rng.integers(1, 5)), int(rng.integers(1, 7))) for i in range(k)])
        vals = {f.name: rng.standard_normal(f.shape) * 10.0 ** rng.integers(-300, 300) for f in lay.fields}
        back = unpack(lay, pack(lay, vals))
        if not all(np.array_equal(back[n], v) for n, v in vals.items()):
            failures += 1
    return report(6, failures == 0, f"{failures} of 1000 round trips differ")


def check_7() -> bool:
    prob, tr, z, rep, traj = solved(*HAMMER_RUN)
    dmax = defect_report(tr, z)
    calls = []
    impact = prob.transitions[0]
    counted = replace(prob, transitions=(lambda x: calls.append(1) or impact(x),))
    tr2 = transcribe(counted, tr.grid)
    calls.clear()  # construction probes the map; count one evaluation only
    tr2.nlp.constraints(z)
    per = abs(traj.x_start - impact(traj.x_end)).max()
    ok = rep.status == "optimal" and dmax <= 1e-6 and len(calls) == 1 and per <= 1e-5
    return report(7, ok, f"defect_max {dmax:.2e} <= 1e-6, impact calls per evaluation {len(calls)}, "
                         f"|x_start - T(x_end)| {per:.2e} <= 1e-5, J={rep.objective:.6f}")


def check_8() -> bool:
    runs = dict(BLOCK_RUNS, **{"hammer multiple_shooting (25 seg)": HAMMER_RUN})
    results = {}
    for label, args in runs.items():
        prob, tr, z, rep, traj = solved(*args)
        if rep.status != "optimal":
            continue
        v = resimulate(prob, traj, tol_base=1e-4)
        env = 10.0 * np.exp(5.0 * (v.times - v.times[0])) * 1e-4
        results[label] = (v.passed, v.max_error, float(np.max(v.errors / env)))
    prob, tr, z, rep, traj = solved(*BLOCK_RUNS["multiple_shooting (20 seg)"])
    ph = traj.phases[0]
    x = ph.x.copy()
    x[0, 5] += 0.1
    corrupted = resimulate(prob, replace(traj, phases=(replace(ph, x=x),)))
    ok = all(r[0] for r in results.values()) and not corrupted.passed
    failing = [f"{k}: max err {r[1]:.2e}, {r[2]:.2f}x the allowance" for k, r in results.items() if not r[0]]
    detail = (f"{sum(r[0] for r in results.values())}/{len(results)} solutions pass; "
              f"corrupted copy {'rejected' if not corrupted.passed else 'ACCEPTED'}")
    if failing:
        detail += "; failing: " + "; ".join(failing)
    return report(8, ok, detail)


def check_9() -> bool:
    sups = {}
    for alpha in (1.0, 0.1, 0.01):
        x = np.linspace(-20 * alpha, 20 * alpha, 400001)
        sups[alpha] = float(np.max(np.abs(np.abs(x) - smooth_abs(x, alpha)))) / alpha
    rng = np.random.default_rng(9)
    bad = 0
    for _ in range(1000):
        n = int(rng.integers(1, 50))
        v = rng.standard_normal(n) * 10.0 ** rng.uniform(-2, 3)
        alpha = 10.0 ** rng.uniform(-3, 1)
        s = smooth_max(v, alpha)
        if not (v.max() <= s <= v.max() + alpha * math.log(n) + 1e-12 * max(1.0, abs(v.max()))):
            bad += 1
    ok = max(sups.values()) <= 0.3 and bad == 0
    return report(9, ok, f"sup |abs - smooth_abs| / alpha = {max(sups.values()):.4f} <= 0.3; "
                         f"smooth_max bound violations {bad}/1000")


def check_10() -> bool:
    base = NlpProblem.from_functions(lambda z: 0.0 * z[0], 1, lower=[-2.5], upper=[-2.5])
    nlp, _ = abs_via_slacks(base, 0)
    _, rep = solve(nlp, np.zeros(3))
    err = abs(rep.objective - 2.5)
    return report(10, rep.status == "optimal" and err <= 1e-5, f"objective {rep.objective:.10f}, |J-2.5|={err:.1e}")


def check_11() -> bool:
    tr = transcribe(build_example("pendulum_swingup"), GridSpec("multiple_shooting", 12))
    rng = np.random.default_rng(11)
    z0 = initial_guess_linear(tr, noise=0.5, seed=1)
    rows = tr.row_index["defect"]
    pat = tr.nlp.sparsity.toarray()[rows]
    c0 = tr.nlp.constraints(z0)[rows]
    leaks = 0
    for _ in range(100):
        z = z0.copy()
        j = rng.integers(tr.nlp.n_vars)
        z[j] += rng.uniform(-0.1, 0.1)
        c = tr.nlp.constraints(z)[rows]
        outside = ~pat[:, j]
        leaks += int(np.any(np.abs(c[outside] - c0[outside]) > 1e-14 * (1 + np.abs(c0[outside]))))
    ss = transcribe(build_example("pendulum_swingup"), GridSpec("single_shooting", 12))
    iu = ss.layout.indices("u0").ravel()
    final = ss.row_index["boundary"][2:]
    dense = bool(np.all(ss.nlp.sparsity.toarray()[np.ix_(final, iu)]))
    return report(11, leaks == 0 and dense,
                  f"{leaks}/100 probes changed a defect row outside its pattern; "
                  f"single-shooting final boundary rows dense in controls: {dense}")


def check_12(tmp_path) -> bool:
    outputs = []
    for run in range(2):
        d = tmp_path / f"run{run}"
        d.mkdir()
        code = cli_main(["solve", "--problem", "particle_field", "--method", "multiple_shooting",
                         "--segments", "15", "--noise", "0.2", "--seed", "42", "--verify",
                         "--out-csv", str(d / "traj.csv"), "--out-json", str(d / "report.json"),
                         "--plot-data", str(d / "plot")])
        files = sorted(p for p in d.rglob("*") if p.is_file())
        outputs.append((code, {p.relative_to(d).as_posix(): p.read_bytes() for p in files}))
    same = outputs[0] == outputs[1]
    return report(12, same and outputs[0][0] == 0,
                  f"exit codes {outputs[0][0]}/{outputs[1][0]}, {len(outputs[0][1])} files byte-identical: {same}")


CHECKS = [check_1, check_2, check_3, check_4, check_5, check_6, check_7, check_8, check_9, check_10, check_11]


@pytest.mark.parametrize("check", CHECKS, ids=[f"criterion_{i + 1}" for i in range(len(CHECKS))])
def test_criterion(check):
    assert check()


def test_criterion_12(tmp_path):
    assert check_12(tmp_path)


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    results = [c() for c in CHECKS]
    with tempfile.TemporaryDirectory() as tmp:
        results.append(check_12(Path(tmp)))
    raise SystemExit(0 if all(results) else 1)
