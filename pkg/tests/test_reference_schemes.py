import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fwsw_sdc.pde_problems import AcousticAdvectionSystem
from fwsw_sdc.reference_schemes import LinearStepper, bdf2_step, midpoint_step
from fwsw_sdc.sdc_engine import LinearSplitSystem

TOL = 1e-13


def scalar(lam):
    return LinearSplitSystem([[lam]], [[0.0]])


def bdf2_scalar_oracle(lam, dt, n):
    """Closed-form recursion for y' = lam*y, started with one midpoint step."""
    mu = lam * dt
    ys = [1.0 + 0j, (1 + mu / 2) / (1 - mu / 2)]
    for _ in range(n - 1):
        ys.append((2.0 * ys[-1] - 0.5 * ys[-2]) / (1.5 - mu))
    return ys[n]


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 0), st.floats(-5, 5))
def test_midpoint_matches_cayley_factor(re, im):
    lam = complex(re, im)
    u, _ = midpoint_step(np.array([1.0 + 0j]), scalar(lam), 0.3, TOL)
    assert u[0] == pytest.approx((1 + 0.15 * lam) / (1 - 0.15 * lam), rel=1e-11)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 0), st.floats(-3, 3), st.integers(1, 12))
def test_bdf2_trajectory_matches_recursion(re, im, n):
    lam = complex(re, im)
    stepper = LinearStepper("bdf2", scalar(lam), 0.2, TOL)
    u = stepper.run(np.array([1.0 + 0j]), n)
    assert u[0] == pytest.approx(bdf2_scalar_oracle(lam, 0.2, n), rel=1e-10)
    assert stepper.solves == n


def test_bdf2_keeps_constants():
    sys = AcousticAdvectionSystem(32, solver="direct")
    c = np.full(64, 3.0)
    u, _ = bdf2_step(c, c, sys, 0.1)
    assert np.allclose(u, c, atol=1e-14)


def test_bdf2_damps_stiff_modes():
    # L-stability: the step factor tends to zero as lam*dt -> -inf
    for lam in (-1e3, -1e6, 1e6j):
        u = LinearStepper("bdf2", scalar(lam), 1.0, TOL).run(np.array([1.0 + 0j]), 5)
        assert abs(u[0]) < 10.0 / abs(lam)


def test_midpoint_is_neutral_on_imaginary_axis():
    u = LinearStepper("midpoint", scalar(50j), 1.0, TOL).run(np.array([1.0 + 0j]), 40)
    assert abs(u[0]) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("scheme", ["midpoint", "bdf2"])
def test_second_order_against_exponential(scheme):
    lam, T = -1.0 + 2.0j, 1.0
    errors = []
    for n in (20, 40, 80):
        u = LinearStepper(scheme, scalar(lam), T / n, TOL).run(np.array([1.0 + 0j]), n)
        errors.append(abs(u[0] - np.exp(lam * T)))
    rates = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(np.abs(rates - 2.0) < 0.15)


def test_callback_sees_every_step():
    seen = []
    LinearStepper("midpoint", scalar(-1.0), 0.1, TOL).run(np.array([1.0]), 4, lambda k, u: seen.append(k))
    assert seen == [1, 2, 3, 4]


def test_uses_system_solver_when_available():
    sys = AcousticAdvectionSystem(32, solver="gmres")
    v = np.sin(2 * np.pi * np.arange(64) / 32)
    stepper = LinearStepper("midpoint", sys, 0.01, 1e-10)
    stepper.run(v, 3)
    assert stepper.solves == 3 and stepper.iterations > 0


def test_unknown_scheme():
    with pytest.raises(ValueError):
        LinearStepper("rk4", scalar(-1.0), 0.1)
