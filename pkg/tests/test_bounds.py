import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psentropy.bounds import (
    bound_report,
    box_extrema,
    compute_P0s,
    compute_P_eps,
    divergence_lower_bound,
    exponential_lower_bound,
    exponential_upper_bound,
    is_stabilizable,
    linear_spectral_entropy,
    lipschitz_upper_bound,
    projected_exponential_lower_bound,
    topological_entropy_linear,
)
from psentropy.dynamics import Box, ExponentialKL, linear_system
from psentropy.models import (
    CubicParams,
    QuadraticParams,
    cubic_divergence_min,
    cubic_exponential_limit,
    cubic_system,
    quadratic_system,
)

ORIGIN = Box.point([0.0])


def scalar(a, rho=1.0):
    return linear_system([[a]], [[1.0]], Box([-rho], [rho]))


# ---------------------------------------------------------------- sets

def test_p_eps_degenerate():
    z = ExponentialKL(1.0, 3.0)
    P = compute_P_eps(ORIGIN, ORIGIN, z, 0.2)
    assert P.upper[0] == pytest.approx(3 * 0.2 + 0.2)


def test_p_eps_radius():
    P = compute_P_eps(Box([-1], [1]), ORIGIN, ExponentialKL(1.0, 2.0), 0.1)
    assert P.upper[0] == pytest.approx(2.3) and P.lower[0] == pytest.approx(-2.3)


def test_p_eps_identity_envelope():
    P = compute_P_eps(Box([0.5], [1.5]), ORIGIN, ExponentialKL(1.0, 1.0), 0.0)
    assert P.upper[0] == pytest.approx(1.5)


def test_p0s_radius():
    assert compute_P0s(Box([0.5], [1.0]), ORIGIN, 2.0).upper[0] == pytest.approx(2.0)


# ---------------------------------------------------------------- upper bounds

@pytest.mark.parametrize("a", [-2.0, 0.3, 1.5])
def test_linear_lipschitz_bound_is_abs_a(a):
    for eps in (0.01, 0.5):
        v = lipschitz_upper_bound(scalar(a), Box([-1], [1]), ORIGIN, ExponentialKL(1.0, 2.0), eps)
        assert v == pytest.approx(abs(a))


def test_linear_exponential_upper():
    v = exponential_upper_bound(scalar(0.7), Box([-1], [1]), ORIGIN, 0.5, 2.0)
    assert v == pytest.approx(1.2)


def test_quadratic_lipschitz_matches_analytic_max():
    p = QuadraticParams(1.0, 0.5, 0.5, -1.0)
    sysm = quadratic_system(p, Box([0.0], [2.0]))
    gamma, z, eps = Box([0.5], [1.0]), ExponentialKL(1.0, 2.0), 0.1
    r = 2 * 1.1 + 0.1
    # |l + 2 a0 x + b0 u| peaks at x = r, u = 2
    expected = 1.0 + 2 * 0.5 * r + 0.5 * 2.0
    assert lipschitz_upper_bound(sysm, gamma, ORIGIN, z, eps, safety=1.0) == pytest.approx(expected)


def test_safety_factor_inflates():
    p = QuadraticParams(1.0, 0.5, 0.5, -1.0)
    sysm = quadratic_system(p, Box([0.0], [2.0]))
    args = (sysm, Box([0.5], [1.0]), ORIGIN, ExponentialKL(1.0, 2.0), 0.1)
    assert lipschitz_upper_bound(*args, safety=1.05) > lipschitz_upper_bound(*args, safety=1.0)


def test_box_extrema_finds_interior_optimum():
    fn = lambda x, u: (x[:, 0] - 0.123) ** 2 + (u[:, 0] + 0.456) ** 2
    vmin, vmax = box_extrema(fn, Box([-1], [1]), Box([-1], [1]), grid_res=7)
    assert vmin == pytest.approx(0.0, abs=1e-10)
    assert vmax == pytest.approx(1.123 ** 2 + 1.456 ** 2)


# ---------------------------------------------------------------- lower bounds

def test_linear_divergence_is_trace():
    A = [[0.2, 1.0], [-0.3, -0.9]]
    sysm = linear_system(A, [[0.0], [1.0]], Box([-1], [1]))
    for eps in (0.01, 1.0):
        assert divergence_lower_bound(sysm, Box.point([0, 0]), eps) == pytest.approx(-0.7)
    assert exponential_lower_bound(sysm, 0.4, 0.1) == pytest.approx(0.8 - 0.7)


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.3])
def test_quadratic_divergence_bound(eps):
    p = QuadraticParams(0.5, -0.8, 0.6, -1.0)
    U = Box([-0.5], [1.0])
    sysm = quadratic_system(p, U)
    expected = 0.5 - 2 * 0.8 * eps + min(0.6 * -0.5, 0.6 * 1.0)
    assert divergence_lower_bound(sysm, ORIGIN, eps) == pytest.approx(expected)


def test_cubic_divergence_interior_minimum():
    p = CubicParams(0.1, alpha0=0.1, beta0=0.3, gamma1=0.5)
    U = Box([-2.0], [2.0])
    grid_min = divergence_lower_bound(cubic_system(p, U), ORIGIN, 0.05)
    assert grid_min == pytest.approx(cubic_divergence_min(p, 0.05, U), abs=1e-8)
    # stationary point u = -b0 / (2 g1) = -0.3 lies inside U
    assert grid_min == pytest.approx(0.1 - 0.2 * 0.05 - 0.09 / 2.0, abs=1e-8)


def test_cubic_limit_approached_from_below():
    p = CubicParams(0.1, alpha0=0.1, beta0=0.02, gamma1=0.05)
    U = Box([-1.0], [1.0])
    vals = [0.05 + cubic_divergence_min(p, e, U) for e in (0.1, 0.01, 0.001)]
    lim = cubic_exponential_limit(p, 0.05)
    assert vals[0] < vals[1] < vals[2] <= lim + 1e-12
    assert abs(vals[2] - lim) < 1e-3


# ---------------------------------------------------------------- linear spectra

def test_spectral_examples():
    assert linear_spectral_entropy(np.diag([1.0, -2.0]), 0.5) == pytest.approx(1.5)
    assert linear_spectral_entropy(np.diag([-3.0, -2.0]), 1.0) == 0.0
    assert linear_spectral_entropy([[0.0, 1.0], [0.0, 0.0]], 1.0) == pytest.approx(2.0)


def test_topological_examples():
    assert topological_entropy_linear(np.diag([1.0, -2.0])) == pytest.approx(1.0)
    assert topological_entropy_linear([[0.0, -1.0], [1.0, 0.0]]) == pytest.approx(0.0)


def test_threshold_eigenvalue_excluded_with_warning():
    with pytest.warns(UserWarning):
        v = linear_spectral_entropy(np.diag([-0.5, 1.0]), 0.5)
    assert v == pytest.approx(1.5)


matrices = st.lists(st.floats(-3, 3, allow_nan=False), min_size=9, max_size=9).map(
    lambda v: np.array(v).reshape(3, 3))


@settings(max_examples=60, deadline=None)
@given(matrices, st.floats(0, 2), st.floats(0, 1))
def test_spectral_identities(A, alpha, dalpha):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        h = linear_spectral_entropy(A, alpha)
        lam = np.linalg.eigvals(A)
        n = int(np.sum(lam.real > -alpha + 1e-9))
        assert topological_entropy_linear(A, alpha) == pytest.approx(h - alpha * n, abs=1e-8)
        assert linear_spectral_entropy(A, alpha + dalpha) >= h - 1e-9
        if np.all(np.abs(lam.real + alpha) > 1e-6):
            assert projected_exponential_lower_bound(A, alpha) == pytest.approx(h, abs=1e-7)


def test_stabilizability():
    assert is_stabilizable([[1.0, 1.0], [0.0, 1.0]], [[0.0], [1.0]])
    assert not is_stabilizable(np.diag([1.0, -1.0]), [[0.0], [1.0]])
    assert is_stabilizable(np.diag([-1.0, 2.0]), [[0.0], [1.0]])


# ---------------------------------------------------------------- report

def test_report_linear_exactness_and_fields():
    A = np.array([[0.1, 1.0], [0.0, -1.0]])
    sysm = linear_system(A, [[0.0], [1.0]], Box([-3], [3]))
    gamma = Box([-0.5, -0.05], [0.5, 0.05])
    rep = bound_report(sysm, gamma, Box.point([0, 0]), ExponentialKL(0.5, 2.0), 0.1)
    d = rep.to_dict()
    assert list(d) == ["lower_general", "lower_exponential", "upper_lipschitz", "upper_exponential",
                       "spectral_exact", "metadata"]
    assert rep.spectral_exact == pytest.approx(linear_spectral_entropy(A, 0.5))
    assert rep.lower_general == pytest.approx(-0.9)
    assert rep.lower_general <= rep.upper_lipschitz
    assert math.isfinite(rep.upper_exponential)


def test_report_nonlinear_has_no_spectral_value():
    p = QuadraticParams(0.1, 0.5, 0.5, -1.0)
    rep = bound_report(quadratic_system(p, Box([0.0], [1.0])), Box([0.2], [0.4]), ORIGIN,
                       ExponentialKL(0.2, 1.1), 0.2)
    assert rep.spectral_exact is None
    assert '"spectral_exact": null' in rep.to_json()
