import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psentropy.dynamics import (
    Box,
    ControlSignal,
    DivergenceError,
    ExponentialKL,
    RangeViolationError,
    TabulatedKL,
    closed_loop,
    closed_loop_batch,
    integrate,
    integrate_batch,
    jacobian_error,
    kl_eval,
    linear_system,
    polynomial_system,
)
from psentropy.fastloop import compose_pieces, simulate_scalar
from psentropy.feedback import FeedbackLaw
from psentropy.models import closed_loop_sweep

U1 = Box([-1.0], [1.0])


def scalar(a):
    return linear_system([[a]], [[1.0]], U1)


# ---------------------------------------------------------------- boxes

def test_point_box_distance():
    L = Box.point([0.0, 0.0])
    assert L.is_point
    assert L.distance(np.array([0.3, -0.5])) == pytest.approx(0.5)


def test_box_distance_zero_inside():
    B = Box([-1, -1], [1, 1])
    assert B.distance(np.array([[0.2, 0.9]]))[0] == 0.0
    assert B.distance(np.array([1.5, 0.0])) == pytest.approx(0.5)


def test_empty_box_rejected():
    with pytest.raises(ValueError):
        Box([1.0], [0.0])


def test_grid_shape_and_corners():
    g = Box([0, -1], [1, 1]).grid([3, 5])
    assert g.shape == (15, 2)
    assert g.min(axis=0).tolist() == [0, -1] and g.max(axis=0).tolist() == [1, 1]


def test_far_distance():
    assert Box([-1.0], [2.0]).far_distance(Box.point([0.0])) == 2.0


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.floats(0, 3))
def test_inflate_contains_neighbourhood(x, r):
    B = Box([-1, -1], [1, 1])
    inside = B.inflate(r).contains(np.array(x), tol=1e-12)
    assert bool(inside) == (B.distance(np.array(x)) <= r + 1e-12)


# ---------------------------------------------------------------- envelopes

def test_exponential_kl_values():
    z = ExponentialKL(1.0, 2.0)
    assert z(0.0, 5.0) == 0.0
    assert z(1.0, 0.0) == 2.0
    assert z(1.0, 1.0) == pytest.approx(2 * math.exp(-1))
    assert z.scaled(2.0).big_m == 4.0


def test_kl_rejects_negative_arguments():
    with pytest.raises(ValueError):
        kl_eval(ExponentialKL(1.0), -1.0, 0.0)


def test_tabulated_kl_interpolates_and_rejects_bad_tables():
    r, s = np.linspace(0, 2, 5), np.linspace(0, 3, 7)
    z = ExponentialKL(0.7, 1.5)
    tab = TabulatedKL(r, s, z(r[:, None], s[None, :]))
    assert tab(1.0, 1.5) == pytest.approx(z(1.0, 1.5))
    with pytest.raises(ValueError):
        TabulatedKL(r, s, np.ones((5, 7)))
    with pytest.raises(ValueError):
        tab(3.0, 0.0)


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10))
def test_exponential_kl_monotone(r, s, ds):
    z = ExponentialKL(0.5, 3.0)
    assert z(r + ds, s) >= z(r, s)
    assert z(r, s + ds) <= z(r, s)


# ---------------------------------------------------------------- integration

def test_scalar_decay_matches_exponential():
    tr = integrate(scalar(-1.0), [1.0], ControlSignal.constant(0.0, 0.01, 1.0), 1.0, 0.01)
    assert abs(tr.final[0] - math.exp(-1)) < 1e-8


def test_rk4_fourth_order():
    # x' = -x + u with u = 1: x(t) = 1 + (x0 - 1) e^{-t}
    sysm = scalar(-1.0)
    exact = 1 - math.exp(-2.0)
    errs = []
    for dt in (0.2, 0.1, 0.05, 0.025):
        tr = integrate(sysm, [0.0], ControlSignal.constant(1.0, dt, 2.0), 2.0, dt)
        errs.append(abs(tr.final[0] - exact))
    factors = [a / b for a, b in zip(errs, errs[1:])]
    assert min(factors) >= 12


def test_divergence_is_reported():
    sysm = polynomial_system(np.array([[0.0], [0.0], [1.0]]), U1)  # x' = x^2
    with pytest.raises(DivergenceError) as err:
        integrate(sysm, [1.0], ControlSignal.constant(0.0, 0.01, 2.0), 2.0, 0.01)
    assert 0.9 < err.value.time < 1.1


def test_step_must_divide_horizon():
    with pytest.raises(ValueError):
        integrate(scalar(0.0), [0.0], ControlSignal.constant(0.0, 0.3, 0.9), 1.0, 0.3)


def test_batch_matches_single():
    sysm = linear_system([[0.0, 1.0], [-1.0, 0.0]], [[0.0], [1.0]], U1)
    vals = np.linspace(-1, 1, 20)[:, None]
    x0s = np.array([[1.0, 0.0], [0.0, 2.0]])
    out = integrate_batch(sysm, x0s, vals, 0.1, 2.0, 0.05)
    for i in range(2):
        tr = integrate(sysm, x0s[i], ControlSignal(0.1, vals), 2.0, 0.05)
        np.testing.assert_array_equal(out[i], tr.states)


def test_sample_hold_replay_is_exact():
    sysm = polynomial_system(np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 1.0]]), Box([-9], [9]))
    fb = FeedbackLaw.linear([[-2.0]])
    x0s = np.linspace(-0.5, 0.5, 7)[:, None]
    states, controls = closed_loop_batch(sysm, fb, x0s, 3.0, 0.01, 0.05, sample_hold=True)
    replay = integrate_batch(sysm, x0s, controls, 0.05, 3.0, 0.01)
    np.testing.assert_array_equal(states, replay)


def test_closed_loop_range_violation():
    fb = FeedbackLaw.linear([[-5.0]])
    with pytest.raises(RangeViolationError):
        closed_loop(scalar(0.0), fb, [1.0], 1.0, 0.01)


def test_polynomial_jacobian_matches_differences():
    c = np.zeros((3, 3))
    c[1, 0], c[2, 0], c[1, 1], c[0, 2] = 1.0, 0.5, -0.3, -1.0
    sysm = polynomial_system(c, Box([-2], [2]))
    assert jacobian_error(sysm, Box([-1], [1]), n_samples=30) < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.floats(-2, 2), st.floats(0.2, 3.0))
def test_compiled_loop_agrees_with_numpy(x0, k):
    c = np.zeros((3, 3))
    c[1, 0], c[2, 0], c[1, 1] = 0.3, 0.2, 1.0
    sysm = polynomial_system(c, Box([-1e9], [1e9]))
    fb = FeedbackLaw.piecewise_linear(-k, -2 * k)
    z = ExponentialKL(0.1, 3.0)
    kw = dict(zeta=z, eps=0.05, fit_alpha=0.1)
    a = closed_loop_sweep(sysm, fb, [[x0]], 2.0, 0.01, fast=True, **kw)
    b = closed_loop_sweep(sysm, fb, [[x0]], 2.0, 0.01, fast=False, **kw)
    if b.diverged_at[0] >= 0:
        # substeps may resolve a finite-time escape one sample earlier
        assert a.diverged_at[0] >= 0 and abs(a.diverged_at[0] - b.diverged_at[0]) <= 0.01 + 1e-12
        return
    np.testing.assert_allclose(a.final, b.final, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(a.margin, b.margin, rtol=1e-9, atol=1e-12)


def test_compose_pieces_quadratic_feedback():
    c = np.zeros((3, 3))
    c[1, 0], c[0, 2] = 1.0, -1.0
    gp, gn = compose_pieces(c, [0.0, 0.0, 8.0], [0.0, 0.0, 8.0])
    np.testing.assert_allclose(gp, [0, 1, 0, 0, -64])


def test_simulate_scalar_reports_divergence():
    st_ = simulate_scalar(np.array([1.0]), np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, 1.0]),
                          np.zeros(1), np.zeros(1), 0.01, 300)
    assert 0.9 < st_.diverged_at[0] < 1.1
