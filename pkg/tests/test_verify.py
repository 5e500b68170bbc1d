from dataclasses import replace

import numpy as np
import pytest

from trajopt.nlp import solve
from trajopt.ocp import Phase, PhaseTrajectory, Problem, Trajectory, build_example
from trajopt.transcribe import GridSpec, initial_guess_linear, transcribe
from trajopt.verify import defect_report, resimulate

BLOCK = build_example("block_move")


def _certificate(name="block_move", N=10):
    prob = build_example(name)
    tr = transcribe(prob, GridSpec("multiple_shooting", N, substeps=8))
    z = tr.consistent_states(initial_guess_linear(tr, noise=1.0, seed=2))
    return prob, tr, z


def test_certificate_resimulates_closely():
    prob, tr, z = _certificate()
    rep = resimulate(prob, tr.decode(z))
    assert rep.max_error <= 1e-6
    assert rep.passed
    assert defect_report(tr, z) <= 1e-12


def test_zero_dynamics_zero_error():
    prob = Problem(phases=(Phase(state_dim=2, control_dim=1, dynamics=lambda t, x, u: 0.0 * x),))
    t = np.linspace(0, 1, 5)
    x = np.tile([[1.0], [-2.0]], (1, 5))
    traj = Trajectory((PhaseTrajectory(t=t, x=x, u=np.zeros((1, 5)), control=None, duration=1.0),))
    rep = resimulate(prob, traj)
    assert rep.max_error == 0.0 and rep.passed


def test_corruption_detected():
    prob, tr, z = _certificate()
    traj = tr.decode(z)
    ph = traj.phases[0]
    x = ph.x.copy()
    x[0, 4] += 0.1
    bad = Trajectory((replace(ph, x=x),))
    rep = resimulate(prob, bad)
    assert not rep.passed
    assert rep.max_error >= 0.05


def test_resimulate_is_pure_and_repeatable():
    prob, tr, z = _certificate("hammer", 8)
    traj = tr.decode(z)
    x_before = traj.phases[0].x.copy()
    a = resimulate(prob, traj)
    b = resimulate(prob, traj)
    assert np.array_equal(a.errors, b.errors)
    assert np.array_equal(traj.phases[0].x, x_before)


def test_growth_fit_reported():
    prob, tr, z = _certificate()
    C, lam = resimulate(prob, tr.decode(z)).growth_fit
    assert np.isfinite(C) and np.isfinite(lam)


def test_integrator_failure_reported():
    prob = Problem(phases=(Phase(state_dim=1, control_dim=0, dynamics=lambda t, x, u: x**2,
                                 duration_bounds=(2.0, 2.0)),))
    t = np.linspace(0, 2, 3)
    traj = Trajectory((PhaseTrajectory(t=t, x=np.ones((1, 3)), u=np.zeros((0, 3)), control=None, duration=2.0),))
    with np.errstate(all="ignore"):
        rep = resimulate(prob, traj)
    assert not rep.passed
    assert "phase 0" in rep.failure


def test_defect_report_on_solution_and_random():
    tr = transcribe(BLOCK, GridSpec("direct_collocation", 8))
    z, rep = solve(tr.nlp, initial_guess_linear(tr))
    assert defect_report(tr, z) <= 1e-6
    rnd = np.random.default_rng(0).standard_normal(tr.nlp.n_vars)
    d = defect_report(tr, rnd)
    assert np.isfinite(d) and d >= 0.0
    ss = transcribe(BLOCK, GridSpec("single_shooting", 4))
    assert defect_report(ss, np.zeros(ss.nlp.n_vars)) == 0.0
