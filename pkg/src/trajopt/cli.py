"""Command-line front end: ``trajopt list | solve | verify``.

Exit codes: 0 success, 1 solver did not reach an optimum, 2 usage error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from trajopt.chebyshev import ChebGrid, scale_to_interval
from trajopt.integrate import CONTROL_KINDS, HOLD, LINEAR, ControlInterpolant
from trajopt.nlp import SolveOptions, solve
from trajopt.nlp.solver import OPTIMAL
from trajopt.ocp import EXAMPLES, PhaseTrajectory, PolynomialControl, Trajectory, build_example
from trajopt.transcribe import (
    DEFAULT_SUBSTEPS,
    METHODS,
    GridSpec,
    TranscriptionError,
    add_regularization,
    initial_guess_linear,
    initial_guess_polyfit,
    transcribe,
)
from trajopt.transcribe.base import DIRECT_TRANSCRIPTION, ORTHOGONAL_COLLOCATION
from trajopt.verify import defect_report, resimulate

log = logging.getLogger("trajopt")

EXIT_OK, EXIT_NOT_OPTIMAL, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------- argument parsing


def _schedule(text: str) -> list[int]:
    try:
        counts = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"schedule must be comma-separated integers, got {text!r}")
    if not counts or any(b <= a for a, b in zip(counts, counts[1:])):
        raise argparse.ArgumentTypeError("schedule must be a strictly ascending list of segment counts")
    return counts


def _verify_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("verification")
    g.add_argument("--rel-tol", type=float, default=1e-10, help="adaptive integrator relative tolerance")
    g.add_argument("--abs-tol", type=float, default=1e-12, help="adaptive integrator absolute tolerance")
    g.add_argument("--tol-base", type=float, default=1e-4)
    g.add_argument("--growth-cap", type=float, default=5.0, help="error growth rate allowance per time unit")
    g.add_argument("--scale-cap", type=float, default=10.0, help="error scale allowance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajopt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="list built-in problems")

    s = sub.add_parser("solve", help="transcribe, solve and optionally verify a problem")
    s.add_argument("--problem", required=True)
    s.add_argument("--method", choices=METHODS, default="multiple_shooting")
    s.add_argument("--segments", type=int, default=20)
    s.add_argument("--substeps", type=int, default=DEFAULT_SUBSTEPS)
    s.add_argument("--integrator", choices=("euler", "rk4"), default="rk4")
    s.add_argument("--control-kind", choices=CONTROL_KINDS, default=None,
                   help="default: hold-constant for direct transcription, else piecewise-linear")
    s.add_argument("--poly-order", type=int, default=None)
    s.add_argument("--regularization", type=float, default=0.0)
    s.add_argument("--guess", choices=("linear", "polyfit"), default="linear")
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--schedule", type=_schedule, default=None,
                   help="comma-separated ascending segment counts, solved coarse to fine")
    g = s.add_argument_group("solver")
    g.add_argument("--feas-tol", type=float, default=1e-6)
    g.add_argument("--opt-tol", type=float, default=1e-6)
    g.add_argument("--max-outer", type=int, default=50)
    g.add_argument("--max-inner", type=int, default=500)
    g.add_argument("--penalty-init", type=float, default=10.0)
    g.add_argument("--penalty-growth", type=float, default=10.0)
    g.add_argument("--fd-step-scale", type=float, default=None)
    g.add_argument("--threads", type=int, default=1)
    o = s.add_argument_group("output")
    o.add_argument("--out-csv", type=Path)
    o.add_argument("--out-json", type=Path)
    o.add_argument("--plot-data", type=Path, metavar="DIR")
    o.add_argument("--timing", action="store_true", help="record wall time in the JSON report")
    s.add_argument("--verify", action="store_true")
    _verify_flags(s)

    v = sub.add_parser("verify", help="re-simulate a trajectory CSV written by solve")
    v.add_argument("--problem", required=True)
    v.add_argument("--csv", required=True, type=Path)
    v.add_argument("--report", type=Path, help="JSON report from solve; supplies the grid settings")
    v.add_argument("--method", choices=METHODS, default=None)
    v.add_argument("--control-kind", choices=CONTROL_KINDS, default=None)
    v.add_argument("--poly-order", type=int, default=None)
    _verify_flags(v)
    return parser


# --------------------------------------------------------------------------- outputs


def _num(x) -> str:
    return format(float(x), ".17g")


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _rows(traj: Trajectory):
    n = max(ph.x.shape[0] for ph in traj.phases)
    m = max(ph.u.shape[0] for ph in traj.phases)
    header = ["t"] + [f"x{i}" for i in range(n)] + [f"u{j}" for j in range(m)] + ["phase"]
    rows = []
    for p, ph in enumerate(traj.phases):
        for k in range(ph.t.size):
            xs = [_num(v) for v in ph.x[:, k]] + [""] * (n - ph.x.shape[0])
            us = [_num(v) for v in ph.u[:, k]] + [""] * (m - ph.u.shape[0])
            rows.append([_num(ph.t[k])] + xs + us + [str(p)])
    return header, rows


def write_csv(path: Path, traj: Trajectory):
    header, rows = _rows(traj)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _cost_accum(problem, traj: Trajectory):
    ts, acc = [], []
    total = 0.0
    for ph, sol in zip(problem.phases, traj.phases):
        g = np.broadcast_to(np.asarray(ph.cost(sol.t, sol.x, sol.u), dtype=float), sol.t.shape)
        inc = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(sol.t))])
        ts.append(sol.t)
        acc.append(total + inc)
        total += inc[-1]
    return np.concatenate(ts), np.concatenate(acc)


def write_plot_data(directory: Path, problem, traj: Trajectory):
    """One ``t value`` file per state, control and the accumulated running cost."""
    directory.mkdir(parents=True, exist_ok=True)

    def dump(name, t, values):
        with open(directory / name, "w") as fh:
            fh.writelines(f"{_num(a)} {_num(b)}\n" for a, b in zip(t, values))

    t = np.concatenate([ph.t for ph in traj.phases])
    for i in range(traj.phases[0].x.shape[0]):
        dump(f"state_{i}.dat", t, np.concatenate([ph.x[i] for ph in traj.phases]))
    for j in range(traj.phases[0].u.shape[0]):
        dump(f"control_{j}.dat", t, np.concatenate([ph.u[j] for ph in traj.phases]))
    dump("cost_accum.dat", *_cost_accum(problem, traj))


# --------------------------------------------------------------------------- commands


def _grid(args, segments) -> GridSpec:
    return GridSpec(
        method=args.method,
        segments=segments,
        substeps=args.substeps,
        integrator=args.integrator,
        control_kind=args.control_kind,
        poly_order=args.poly_order,
    )


def _solve_options(args) -> SolveOptions:
    kw = dict(feas_tol=args.feas_tol, opt_tol=args.opt_tol, max_outer=args.max_outer,
              max_inner=args.max_inner, penalty_init=args.penalty_init,
              penalty_growth=args.penalty_growth, seed=args.seed, threads=args.threads)
    if args.fd_step_scale is not None:
        kw["fd_step_scale"] = args.fd_step_scale
    return SolveOptions(**kw)


def _first_guess(args, problem, tr):
    if args.guess == "linear":
        return initial_guess_linear(tr, noise=args.noise, seed=args.seed)
    if problem.guess is None:
        raise UsageError(f"problem {problem.name!r} has no waypoints for a polyfit guess")
    w = np.asarray(problem.guess[0], dtype=float)
    T = tr.phases[0].nominal_duration
    times = np.linspace(0.0, T, w.shape[1])
    degree = min(3, w.shape[1] - 1)
    return initial_guess_polyfit(tr, list(zip(times, w.T)), degree, control_affine=True,
                                 noise=args.noise, seed=args.seed)


def cmd_solve(args) -> int:
    started = time.perf_counter()
    try:
        problem = build_example(args.problem)
    except KeyError as exc:
        raise UsageError(exc.args[0])
    schedule = args.schedule or [args.segments]
    try:
        grids = [_grid(args, n) for n in schedule]
        stages = [transcribe(problem, g) for g in grids]
        stages = [add_regularization(tr, args.regularization) for tr in stages]
        opts = _solve_options(args)
    except (TranscriptionError, ValueError) as exc:
        raise UsageError(str(exc))

    z = _first_guess(args, problem, stages[0])
    report = None
    for i, tr in enumerate(stages):
        if i > 0:
            z = tr.encode(stages[i - 1].decode(z))
        z, report = solve(tr.nlp, z, opts)
        log.info("stage %d (%d segments): %s J=%.10g viol=%.2e",
                 i, schedule[i], report.status, report.objective, report.max_violation)
    tr = stages[-1]
    traj = tr.decode(z)
    dmax = defect_report(tr, z)

    verification = None
    if args.verify:
        verification = resimulate(problem, traj, rel_tol=args.rel_tol, abs_tol=args.abs_tol,
                                  tol_base=args.tol_base, growth_cap=args.growth_cap,
                                  scale_cap=args.scale_cap, defect_max=dmax)

    if args.out_csv:
        write_csv(args.out_csv, traj)
    if args.plot_data:
        write_plot_data(args.plot_data, problem, traj)
    doc = {
        "problem": args.problem,
        "method": args.method,
        "grid": dict(tr.grid.as_dict(), schedule=schedule),
        "status": report.status,
        "objective": _json_float(report.objective),
        "defect_max": _json_float(dmax),
        "max_violation": _json_float(report.max_violation),
        "outer_iters": report.outer_iters,
        "inner_iters": report.inner_iters,
        "verify": None if verification is None else {
            "max_error": _json_float(verification.max_error), "pass": verification.passed},
        "wall_time_s": round(time.perf_counter() - started, 3) if args.timing else None,
    }
    text = json.dumps(doc, indent=2) + "\n"
    if args.out_json:
        args.out_json.write_text(text)
    else:
        sys.stdout.write(text)

    if report.status != OPTIMAL:
        print(f"trajopt: solver finished with status {report.status}", file=sys.stderr)
        return EXIT_NOT_OPTIMAL
    if verification is not None and not verification.passed:
        why = verification.failure or f"max error {verification.max_error:.3e} exceeds the allowance"
        print(f"trajopt: verification failed: {why}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def read_csv(path: Path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "t" or rows[0][-1] != "phase":
        raise UsageError(f"{path}: not a trajectory CSV (expected header t,...,phase)")
    header = rows[0]
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    ucols = [i for i, h in enumerate(header) if h.startswith("u")]
    data: dict[int, list] = {}
    for r in rows[1:]:
        data.setdefault(int(r[-1]), []).append(r)
    out = []
    for p in sorted(data):
        block = data[p]
        t = np.array([float(r[0]) for r in block])
        x = np.array([[float(r[i]) for i in xcols if r[i] != ""] for r in block]).T
        u = np.array([[float(r[i]) for i in ucols if r[i] != ""] for r in block]).T.reshape(-1, len(block))
        out.append((t, x, u))
    return out


def _rebuild_control(method, kind, order, t, u):
    if u.shape[0] == 0:
        return None
    if method == ORTHOGONAL_COLLOCATION:
        q = order + 1
        if t.size % q:
            raise UsageError(f"{t.size} samples do not split into segments of order {order}")
        unit = ChebGrid.build(order)
        grids, values = [], []
        for j in range(t.size // q):
            seg = slice(j * q, (j + 1) * q)
            grids.append(scale_to_interval(unit, t[seg][0], t[seg][-1]))
            values.append(u[:, seg][:, ::-1])
        return PolynomialControl(tuple(grids), tuple(values))
    if method == DIRECT_TRANSCRIPTION or kind == HOLD:
        return ControlInterpolant(HOLD, t, u[:, :-1])
    return ControlInterpolant(LINEAR, t, u)


def cmd_verify(args) -> int:
    try:
        problem = build_example(args.problem)
    except KeyError as exc:
        raise UsageError(exc.args[0])
    grid = {}
    if args.report:
        grid = json.loads(args.report.read_text()).get("grid", {})
    method = args.method or grid.get("method", "multiple_shooting")
    kind = args.control_kind or grid.get("control_kind", LINEAR)
    order = args.poly_order or grid.get("poly_order")
    if method == ORTHOGONAL_COLLOCATION and not order:
        raise UsageError("orthogonal collocation trajectories need --poly-order or --report")
    phases = []
    for t, x, u in read_csv(args.csv):
        control = _rebuild_control(method, kind, order, t, u)
        phases.append(PhaseTrajectory(t=t, x=x, u=u, control=control, duration=float(t[-1] - t[0])))
    if len(phases) != len(problem.phases):
        raise UsageError(f"CSV has {len(phases)} phase(s), problem has {len(problem.phases)}")
    rep = resimulate(problem, Trajectory(tuple(phases)), rel_tol=args.rel_tol, abs_tol=args.abs_tol,
                     tol_base=args.tol_base, growth_cap=args.growth_cap, scale_cap=args.scale_cap)
    sys.stdout.write(json.dumps({"max_error": _json_float(rep.max_error), "pass": rep.passed,
                                 "growth_fit": list(rep.growth_fit), "failure": rep.failure},
                                indent=2) + "\n")
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_list(args) -> int:
    for name in EXAMPLES:
        prob = build_example(name)
        dims = ", ".join(f"n={ph.state_dim} m={ph.control_dim}" for ph in prob.phases)
        extra = " periodic" if prob.periodic else ""
        print(f"{name}\t{len(prob.phases)} phase(s): {dims}{extra}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    handler = {"list": cmd_list, "solve": cmd_solve, "verify": cmd_verify}[args.command]
    try:
        return handler(args)
    except UsageError as exc:
        print(f"trajopt: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"trajopt: {type(exc).__name__}: {exc}".splitlines()[0], file=sys.stderr)
        return EXIT_NOT_OPTIMAL


if __name__ == "__main__":
    sys.exit(main())
