import math

import numpy as np
import pytest

from trajopt.integrate import (
    AlignmentError,
    ControlInterpolant,
    NonFiniteError,
    StepSizeError,
    adaptive_rk45,
    augment_cost_integrand,
    euler_step,
    rk4_step,
    simulate_segment,
)

grow = lambda t, x, u: x
zero = lambda t, x, u: np.zeros_like(x)


def test_euler_step_examples():
    assert euler_step(grow, 0.0, np.array([1.0]), None, 0.1)[0] == pytest.approx(1.1)
    x = np.array([3.0, -2.0])
    np.testing.assert_array_equal(euler_step(zero, 0.0, x, None, 0.5), x)
    const = lambda t, x, u: np.full_like(x, 2.5)
    np.testing.assert_allclose(euler_step(const, 0.0, x, None, 0.2), x + 0.5)


def test_euler_rejects_non_finite_and_carries_point():
    bad = lambda t, x, u: x / 0.0 * 0.0
    with np.errstate(all="ignore"), pytest.raises(NonFiniteError) as info:
        euler_step(bad, 0.3, np.array([1.0]), np.array([2.0]), 0.1)
    assert info.value.t == 0.3
    assert info.value.u[0] == 2.0


def test_rk4_step_hand_values():
    # stages 1, 1.5, 1.75, 2.75
    assert rk4_step(grow, 0.0, np.array([1.0]), None, 1.0)[0] == pytest.approx(65 / 24, abs=1e-15)
    np.testing.assert_array_equal(rk4_step(zero, 0.0, np.array([4.0]), None, 1.0), [4.0])
    t2 = lambda t, x, u: np.full_like(x, t**2)
    assert rk4_step(t2, 0.0, np.array([0.0]), None, 1.0)[0] == pytest.approx(1 / 3, abs=1e-15)


def test_rk4_exact_for_cubic_time_polynomials():
    poly = lambda t, x, u: np.full_like(x, 4 * t**3 - 3 * t**2 + 2 * t - 1)
    got = rk4_step(poly, 0.5, np.array([0.0]), None, 1.5)[0]
    F = lambda t: t**4 - t**3 + t**2 - t
    assert got == pytest.approx(F(2.0) - F(0.5), abs=1e-13)


def test_rk4_names_failing_stage():
    def f(t, x, u):
        return np.array([np.nan]) if t > 0.0 else x

    with pytest.raises(NonFiniteError, match="stage 2"):
        rk4_step(f, 0.0, np.array([1.0]), None, 0.1)


def test_rk4_samples_control_at_midpoint():
    seen = []
    u = lambda t: seen.append(t) or np.array([0.0])
    rk4_step(lambda t, x, u: x * 0, 1.0, np.array([0.0]), u, 0.5)
    assert sorted(set(seen)) == [1.0, 1.25, 1.5]


def test_simulate_segment_examples():
    tr = simulate_segment(zero, 0.0, np.array([1.0, 2.0]), None, 5, 0.1)
    assert tr.states.shape == (6, 2)
    assert np.all(tr.states == [1.0, 2.0])
    one = lambda t, x, u: np.ones_like(x)
    assert simulate_segment(one, 0.0, np.array([0.0]), None, 4, 0.25, "euler").final[0] == 1.0


def test_simulate_segment_rk4_order_16():
    err = [abs(simulate_segment(grow, 0.0, np.array([1.0]), None, n, 1.0 / n).final[0] - math.e)
           for n in (10, 20)]
    assert 14 < err[0] / err[1] < 17


def test_simulate_continuation_is_bit_exact():
    f = lambda t, x, u: np.sin(t) * x + u
    u = np.array([0.3])
    full = simulate_segment(f, 0.0, np.array([1.0]), u, 7, 0.1)
    a = simulate_segment(f, 0.0, np.array([1.0]), u, 3, 0.1)
    b = simulate_segment(f, a.times[-1], a.final, u, 4, 0.1)
    assert np.array_equal(full.final, b.final)
    assert np.array_equal(full.times[-1], b.times[-1])


def test_simulate_segment_is_deterministic():
    f = lambda t, x, u: np.cos(x) + t
    a = simulate_segment(f, 0.0, np.array([0.2]), None, 9, 0.07)
    b = simulate_segment(f, 0.0, np.array([0.2]), None, 9, 0.07)
    assert np.array_equal(a.states, b.states)


def test_simulate_segment_batched_columns_match_single():
    f = lambda t, x, u: np.stack([x[1], -x[0] + u[0]])
    X0 = np.array([[0.0, 1.0, -1.0], [1.0, 0.0, 0.5]])
    U = np.array([[0.1, 0.2, 0.3]])
    batch = simulate_segment(f, np.zeros(3), X0, U, 5, 0.1).final
    for k in range(3):
        single = simulate_segment(f, 0.0, X0[:, k], U[:, k], 5, 0.1).final
        np.testing.assert_allclose(batch[:, k], single, rtol=0, atol=1e-15)


def test_misaligned_hold_control_rejected():
    u = ControlInterpolant("hold-constant", np.array([0.0, 0.3, 1.0]), np.array([[1.0, 2.0]]))
    with pytest.raises(AlignmentError):
        simulate_segment(lambda t, x, u: u + 0 * x, 0.0, np.array([0.0]), u, 4, 0.25)


def test_aligned_hold_control_integrates_exactly():
    u = ControlInterpolant("hold-constant", np.array([0.0, 0.5, 1.0]), np.array([[1.0, 3.0]]))
    tr = simulate_segment(lambda t, x, u: u + 0 * x, 0.0, np.array([0.0]), u, 4, 0.25)
    assert tr.final[0] == pytest.approx(2.0, abs=1e-15)


def test_interpolant_validation_and_values():
    with pytest.raises(ValueError):
        ControlInterpolant("hold-constant", np.array([0.0, 1.0]), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        ControlInterpolant("piecewise-linear", np.array([0.0, 0.0, 1.0]), np.zeros((1, 3)))
    lin = ControlInterpolant("piecewise-linear", np.array([0.0, 1.0, 2.0]), np.array([[0.0, 2.0, 0.0]]))
    assert lin(0.5)[0] == pytest.approx(1.0)
    assert lin(1.5)[0] == pytest.approx(1.0)
    assert lin.piece(0)(1.0)[0] == pytest.approx(2.0)


def test_augment_cost_integrand():
    f0 = lambda t, x, u: np.zeros_like(x)
    aug = augment_cost_integrand(f0, lambda t, x, u: 0.0 * x[0])
    assert simulate_segment(aug, 0.0, np.array([1.0, 0.0]), None, 3, 0.1).final[-1] == 0.0
    aug = augment_cost_integrand(f0, lambda t, x, u: 1.0 + 0.0 * x[0])
    assert simulate_segment(aug, 0.0, np.array([1.0, 0.0]), None, 4, 0.5).final[-1] == pytest.approx(2.0)
    aug = augment_cost_integrand(f0, lambda t, x, u: u[0] ** 2)
    u = lambda t: np.array([6.0 - 12.0 * t])
    # quadratic integrand: RK4 is exact, oracle is the analytic integral 12
    q = simulate_segment(aug, 0.0, np.array([0.0, 0.0]), u, 10, 0.1).final[-1]
    assert q == pytest.approx(12.0, abs=1e-12)


@pytest.mark.parametrize("method,order,tol", [("euler", 1.0, 0.1), ("rk4", 4.0, 0.2)])
def test_convergence_orders(method, order, tol):
    hs = [1 / 8, 1 / 16, 1 / 32, 1 / 64, 1 / 128]
    errs = [abs(simulate_segment(grow, 0.0, np.array([1.0]), None, round(1 / h), h, method).final[0] - math.e)
            for h in hs]
    slope = np.polyfit(np.log2(hs), np.log2(errs), 1)[0]
    assert abs(slope - order) <= tol


def test_adaptive_examples():
    d = adaptive_rk45(zero, 0.0, np.array([2.0]), 3.0)
    assert np.all(d.x == 2.0)
    d = adaptive_rk45(grow, 0.0, np.array([1.0]), 1.0, rel_tol=1e-10)
    assert abs(d.final[0] - math.e) <= 1e-8
    loose = adaptive_rk45(grow, 0.0, np.array([1.0]), 1.0, rel_tol=1e-3)
    tight = adaptive_rk45(grow, 0.0, np.array([1.0]), 1.0, rel_tol=1e-9)
    assert loose.n_steps < tight.n_steps


def test_adaptive_dense_output():
    osc = lambda t, x, u: np.stack([x[1], -x[0]])
    d = adaptive_rk45(osc, 0.0, np.array([0.0, 1.0]), 2.0, rel_tol=1e-10, abs_tol=1e-12)
    ts = np.linspace(0, 2, 37)
    np.testing.assert_allclose(d(ts)[0], np.sin(ts), atol=1e-7)
    assert d(0.3).shape == (2,)
    with pytest.raises(ValueError):
        d(2.5)


def test_adaptive_restarts_at_breakpoints():
    u = ControlInterpolant("hold-constant", np.array([0.0, 0.5, 1.0]), np.array([[1.0, -1.0]]))
    d = adaptive_rk45(lambda t, x, u: u + 0 * x, 0.0, np.array([0.0]), 1.0, u)
    assert 0.5 in d.t_left
    assert d.final[0] == pytest.approx(0.0, abs=1e-12)
    assert d(0.5)[0] == pytest.approx(0.5, abs=1e-12)


def test_adaptive_preconditions_and_underflow():
    with pytest.raises(ValueError):
        adaptive_rk45(grow, 1.0, np.array([1.0]), 1.0)
    with pytest.raises(ValueError):
        adaptive_rk45(grow, 0.0, np.array([1.0]), 1.0, rel_tol=0.0)
    blowup = lambda t, x, u: x**2
    with np.errstate(all="ignore"), pytest.raises(StepSizeError) as info:
        adaptive_rk45(blowup, 0.0, np.array([1.0]), 2.0)
    assert info.value.t == pytest.approx(1.0, abs=1e-3)
