import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psentropy.bounds import topological_entropy_linear
from psentropy.dynamics import Box, ExponentialKL, linear_system
from psentropy.feedback import (
    FeedbackLaw,
    GridResolutionError,
    PreconditionError,
    ball_cover_count,
    companion_gain,
    feedback_entropy_rate,
    feedback_spanning_count,
    pole_margin,
    proposition42_check,
)


def scalar(a, rho=10.0):
    return linear_system([[a]], [[1.0]], Box([-rho], [rho]))


def line(lo, hi, n):
    return np.linspace(lo, hi, n)[:, None]


# ---------------------------------------------------------------- laws

@pytest.mark.parametrize("fb", [
    FeedbackLaw.linear([[1.0, -2.0]]),
    FeedbackLaw.quadratic(-0.5, 3.0),
    FeedbackLaw.piecewise_linear(-1.0, -4.0),
])
def test_builtin_laws_vanish_at_origin(fb):
    d = len(fb.params["K"][0]) if fb.kind == "linear" else 1
    assert np.all(fb(np.zeros((1, d))) == 0)


def test_piecewise_linear_branches():
    fb = FeedbackLaw.piecewise_linear(-1.0, -4.0)
    np.testing.assert_array_equal(fb(np.array([[2.0], [-2.0]])), [[-2.0], [8.0]])


# ---------------------------------------------------------------- linear helpers

def test_pole_margin_examples():
    assert pole_margin(np.zeros((2, 2)), np.eye(2), -2 * np.eye(2), 1.0) == pytest.approx(1.0)
    assert pole_margin(np.diag([-3.0, -4.0]), np.eye(2), np.zeros((2, 2)), 1.0) == pytest.approx(2.0)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_companion_gain_places_poles(d):
    n = d - 1
    A2 = np.diag(np.ones(n - 1), 1) if n > 1 else np.zeros((1, 1))
    B2 = np.zeros((n, 1))
    B2[-1] = 1.0
    K = companion_gain([-2.0] * n)
    # repeated poles are ill-conditioned, so compare characteristic polynomials
    np.testing.assert_allclose(np.poly(A2 + B2 @ K[None, :]), np.poly([-2.0] * n), atol=1e-9)
    if n == 1:
        assert pole_margin(A2, B2, K[None, :], 1.0) == pytest.approx(1.0)


def test_companion_gain_known_polynomial():
    # (s + 1)(s + 2) = s^2 + 3 s + 2
    np.testing.assert_allclose(companion_gain([-1.0, -2.0]), [-2.0, -3.0])


def test_ball_cover_examples():
    assert ball_cover_count(Box([-1], [1]), 1.0) == 1
    assert ball_cover_count(Box([-1, -1], [1, 1]), 0.25) == 16
    assert ball_cover_count(Box([0, 0], [1, 3]), 5.0) == 1


def test_ball_cover_slope_is_dimension():
    for d in (1, 2, 3):
        B = Box(-np.ones(d), np.ones(d))
        rs = np.array([0.1, 0.05, 0.025, 0.0125])
        n = [ball_cover_count(B, r) for r in rs]
        slope = np.polyfit(np.log(rs), np.log(n), 1)[0]
        assert slope == pytest.approx(-d, abs=1e-9)


@settings(max_examples=50)
@given(st.floats(0.01, 3.0), st.floats(0.01, 3.0))
def test_ball_cover_monotone_in_radius(r, dr):
    B = Box([0, 0], [1.5, 2.5])
    assert ball_cover_count(B, r + dr) <= ball_cover_count(B, r)


# ---------------------------------------------------------------- feedback entropy

def test_single_point_count_one():
    res = feedback_spanning_count(scalar(0.5), FeedbackLaw.linear([[-1.0]]), [[0.3]],
                                  ExponentialKL(0.5, 2.0), 0.1, 3.0, 0.05)
    assert res.count == 1


def test_linear_count_does_not_depend_on_gain():
    z, grid = ExponentialKL(0.3, 1.0), line(-0.5, 0.5, 201)
    counts = [feedback_spanning_count(scalar(0.4), FeedbackLaw.linear([[k]]), grid, z, 0.05, 3.0, 0.05).count
              for k in (-0.5, -1.0, -3.0)]
    assert len(set(counts)) == 1


def interval_oracle(grid, a, alpha, M, eps, tau):
    """Seeds reach every grid point within ``r = M eps / (e^{(a+alpha) tau} - M)``."""
    r = min(M * eps / (math.exp((a + alpha) * tau) - M), eps)
    h = grid[1, 0] - grid[0, 0]
    w = int(math.floor(r / h + 1e-9))
    return math.ceil(grid.shape[0] / (2 * w + 1))


@pytest.mark.parametrize("tau", [2.0, 3.0, 4.0])
def test_scalar_count_matches_interval_cover(tau):
    a, alpha, M, eps = 0.3, 0.2, 1.0, 0.05
    grid = line(-0.5, 0.5, 1001)
    res = feedback_spanning_count(scalar(a), FeedbackLaw.linear([[-1.0]]), grid, ExponentialKL(alpha, M),
                                  eps, tau, 0.05, method="auto")
    assert abs(res.count - interval_oracle(grid, a, alpha, M, eps, tau)) <= 1


def test_expanding_rate_near_a_plus_alpha():
    a, alpha = 0.3, 0.2
    est = feedback_entropy_rate(scalar(a), FeedbackLaw.linear([[-1.0]]), line(-0.5, 0.5, 4001),
                                ExponentialKL(alpha, 1.0), 0.05, [4.0, 5.0, 6.0, 7.0, 8.0], 0.05)
    assert est.estimate.rate == pytest.approx(a + alpha, rel=0.1)


def test_stable_loop_counts_stay_one():
    est = feedback_entropy_rate(scalar(-1.0), FeedbackLaw.linear([[-1.0]]), line(-0.1, 0.1, 21),
                                ExponentialKL(0.5, 1.0), 0.5, [1.0, 2.0, 4.0], 0.05, check_resolution=False)
    assert est.estimate.counts == [1, 1, 1] and est.estimate.rate == 0.0


def test_feedback_rate_below_topological_bound():
    # 2d linear: slope of feedback counts never exceeds the shifted spectral sum
    A = np.array([[0.2, 0.0], [0.0, -1.0]])
    sysm = linear_system(A, np.eye(2), Box([-5, -5], [5, 5]))
    grid = Box([-0.5, -0.04], [0.5, 0.04]).grid([201, 3])
    est = feedback_entropy_rate(sysm, FeedbackLaw.linear(-np.eye(2)), grid, ExponentialKL(0.3, 1.0), 0.05,
                                [2.0, 3.0, 4.0, 5.0], 0.05, method="greedy")
    assert est.estimate.rate <= 1.1 * (topological_entropy_linear(A, 0.3) + 0.3)


def test_coarse_grid_is_flagged():
    with pytest.raises(GridResolutionError):
        feedback_entropy_rate(scalar(0.5), FeedbackLaw.linear([[-1.0]]), line(-0.5, 0.5, 11),
                              ExponentialKL(0.5, 1.0), 0.05, [2.0, 4.0, 8.0], 0.05)


# ---------------------------------------------------------------- comparison

def test_check_single_point():
    rep = proposition42_check(scalar(0.5), FeedbackLaw.linear([[-2.0]]), [[0.2]], ExponentialKL(0.5, 2.0),
                              0.1, [1.0, 2.0, 3.0], 0.05)
    assert rep.lhs_rate == 0.0 and rep.rhs_rate == 0.0 and rep.passed


def test_check_stable_scalar():
    rep = proposition42_check(scalar(-1.0), FeedbackLaw.linear([[-1.0]]), line(-0.1, 0.1, 21),
                              ExponentialKL(0.5, 1.0), 0.5, [1.0, 2.0, 3.0], 0.05)
    assert rep.lhs_rate == 0.0 and rep.rhs_rate == 0.0 and rep.passed


def test_check_slow_closed_loop():
    # closed-loop eigenvalue -0.2 lies in (-alpha, 0)
    rep = proposition42_check(scalar(0.1), FeedbackLaw.linear([[-0.3]]), line(-0.5, 0.5, 201),
                              ExponentialKL(0.5, 2.0), 0.1, [1.0, 2.0, 2.5], 0.05)
    assert rep.precondition_ok and rep.counts_ordered
    assert rep.rhs_rate >= rep.lhs_rate and rep.passed
    assert set(rep.to_dict()) >= {"spanning_rate_2eps_2zeta", "feedback_rate", "pass", "slack"}


def test_check_precondition_violation_lists_points():
    with pytest.raises(PreconditionError) as err:
        proposition42_check(scalar(0.1), FeedbackLaw.linear([[-0.3]]), line(-0.5, 0.5, 21),
                            ExponentialKL(0.5, 2.0), 0.1, [2.0, 4.0, 6.0], 0.05)
    assert len(err.value.violations) > 0
