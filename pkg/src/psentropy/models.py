"""Scalar quadratic and cubic models, a chain of integrators, feedback synthesis
and practical-stability verification.

Quadratic model ``x' = l x + a0 x^2 + b0 x u + g0 u^2`` with feedback
``u = k x + q x^2`` and ``k = -b0 / (2 g0)``.  The closed loop is

    g(x) = l x + D x^2 + g0 q^2 x^4,   D = (4 a0 g0 - b0^2) / (4 g0),

whose nonzero equilibrium ``e(q)`` is the real root of a reduced cubic and
scales like ``|q|^{-2/3}``; the slope ``g'(e(q))`` tends to ``-3 l``.

Cubic model ``x' = l x + a0 x^2 + b0 x u + g0 u^2 + a1 x^3 + b1 x^2 u + g1 x u^2
+ h1 u^3`` with feedback ``k1 x`` (``x >= 0``) and ``k2 x`` (``x < 0``); each
half has closed loop ``l x + D0 x^2 + D1 x^3``.

Overshoot factors ``M`` fitted here are empirical: the worst amplification
ratio on a grid over a finite horizon.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bounds import _clean
from .dynamics import (
    BLOWUP_THRESHOLD,
    Box,
    ControlSystem,
    ExponentialKL,
    KLFunction,
    _ratio,
    polynomial_system,
    rk4_step,
)
from .fastloop import compose_pieces, simulate_scalar
from .feedback import FeedbackLaw, companion_gain, pole_margin

MAX_DOUBLINGS = 60
M_INFLATION = 1.05
RHO_INFLATION = 1.10
RATIO_FLOOR = 1e-10


class SynthesisError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class DiscriminantError(ValueError):
    pass


class NonAttractionError(RuntimeError):
    def __init__(self, message, seeds=()):
        self.seeds = list(seeds)
        super().__init__(message)


# ---------------------------------------------------------------------------
# parameters

@dataclass(frozen=True)
class QuadraticParams:
    lam: float
    alpha0: float
    beta0: float
    gamma0: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.gamma0 == 0:
            raise ValueError("gamma0 must be nonzero")

    @property
    def k(self) -> float:
        return -self.beta0 / (2.0 * self.gamma0)

    @property
    def delta(self) -> float:
        return (4 * self.alpha0 * self.gamma0 - self.beta0 ** 2) / (4 * self.gamma0)

    def coeffs(self) -> np.ndarray:
        c = np.zeros((3, 3))
        c[1, 0], c[2, 0], c[1, 1], c[0, 2] = self.lam, self.alpha0, self.beta0, self.gamma0
        return c


@dataclass(frozen=True)
class CubicParams:
    lam: float
    alpha0: float = 0.0
    beta0: float = 0.0
    gamma0: float = 1.0
    alpha1: float = 0.0
    beta1: float = 0.0
    gamma1: float = 0.0
    eta1: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.gamma0 == 0 or self.eta1 == 0:
            raise ValueError("gamma0 and eta1 must be nonzero")

    def coeffs(self) -> np.ndarray:
        c = np.zeros((4, 4))
        c[1, 0], c[2, 0], c[1, 1], c[0, 2] = self.lam, self.alpha0, self.beta0, self.gamma0
        c[3, 0], c[2, 1], c[1, 2], c[0, 3] = self.alpha1, self.beta1, self.gamma1, self.eta1
        return c

    def deltas(self, k: float) -> tuple[float, float]:
        d0 = self.alpha0 + self.beta0 * k + self.gamma0 * k * k
        d1 = self.alpha1 + self.beta1 * k + self.gamma1 * k * k + self.eta1 * k ** 3
        return d0, d1


@dataclass(frozen=True)
class ChainParams:
    d: int
    lam: float
    alpha0: float
    beta0: float
    gammas: tuple
    k1: float
    K2: tuple

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be at least 2")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if len(self.gammas) != self.d - 1 or len(self.K2) != self.d - 1:
            raise ValueError("gammas and K2 need d - 1 entries")
        if self.gammas[0] == 0:
            raise ValueError("gamma_2 must be nonzero")
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "K2", tuple(float(g) for g in self.K2))

    @classmethod
    def with_poles(cls, d, lam, alpha0, beta0, gammas, k1, poles) -> "ChainParams":
        return cls(d, lam, alpha0, beta0, tuple(gammas), k1, tuple(companion_gain(poles)))


@dataclass
class SynthesisResult:
    gains: dict
    equilibria: list
    envelope: ExponentialKL
    rho: float
    epsilon: float
    feedback: FeedbackLaw
    system: ControlSystem
    control_range: Box
    dt: float
    fit_horizon: float
    iterations: int
    m_hat: float

    def to_dict(self) -> dict:
        return {
            "gains": self.gains,
            "equilibria": [{"location": e, "jacobian": j} for e, j in self.equilibria],
            "envelope": self.envelope.to_dict(),
            "M_kind": "empirical",
            "fit_horizon": self.fit_horizon,
            "rho": self.rho,
            "epsilon": self.epsilon,
            "control_range": self.control_range.to_dict(),
            "dt": self.dt,
            "iterations": self.iterations,
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=2, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# systems

def _default_range(rho: Optional[float]) -> Box:
    r = 1.0 if rho is None else float(rho)
    return Box([-r], [r])


def quadratic_system(p: QuadraticParams, control_range: Optional[Box] = None,
                     name: str = "quadratic") -> ControlSystem:
    return polynomial_system(p.coeffs(), control_range or _default_range(None), name)


def cubic_system(p: CubicParams, control_range: Optional[Box] = None, name: str = "cubic") -> ControlSystem:
    return polynomial_system(p.coeffs(), control_range or _default_range(None), name)


def chain_system(p: ChainParams, control_range: Optional[Box] = None,
                 name: str = "chain") -> tuple[ControlSystem, FeedbackLaw]:
    """``x1' = l x1 + a0 x1^2 + b0 x1 x2 + sum_j g_j x_j^2``, ``z' = A2 z + B2 u``
    with ``z = (x2, ..., xd)`` a chain of integrators, and the feedback
    ``u = k1 x1 + K2 z``."""
    d = p.d
    A2 = np.diag(np.ones(d - 2), 1) if d > 2 else np.zeros((1, 1))
    B2 = np.zeros((d - 1, 1))
    B2[-1, 0] = 1.0
    K2 = np.asarray(p.K2)[None, :]
    if pole_margin(A2, B2, K2, 0.0) <= 0:
        raise ValueError("A2 + B2 K2 is not stable")
    g = np.asarray(p.gammas)
    lam, a0, b0 = p.lam, p.alpha0, p.beta0

    def fld(x, u):
        out = np.empty_like(x)
        x1, z = x[:, 0], x[:, 1:]
        out[:, 0] = lam * x1 + a0 * x1 ** 2 + b0 * x1 * z[:, 0] + (z ** 2) @ g
        out[:, 1:] = z @ A2.T + u @ B2.T
        return out

    def jac(x, u):
        n = x.shape[0]
        J = np.zeros((n, d, d))
        J[:, 0, 0] = lam + 2 * a0 * x[:, 0] + b0 * x[:, 1]
        J[:, 0, 1:] = 2 * g * x[:, 1:]
        J[:, 0, 1] += b0 * x[:, 0]
        J[:, 1:, 1:] = A2
        return J

    U = control_range or _default_range(None)
    sys = ControlSystem(d, 1, fld, jac, U, name)
    K = np.concatenate([[p.k1], p.K2])[None, :]
    return sys, FeedbackLaw("linear", {"K": K.tolist()}, lambda x: x @ K.T)


# ---------------------------------------------------------------------------
# quadratic model

def _cbrt(v: float) -> float:
    return math.copysign(abs(v) ** (1.0 / 3.0), v)


def cardano_coefficients(p: QuadraticParams, q: float) -> tuple[float, float, float]:
    """``(a, b, D)`` of ``x^3 + 3 a x + b = 0`` and its discriminant ``4 a^3 + b^2``."""
    g0 = p.gamma0
    a = (4 * p.alpha0 * g0 - p.beta0 ** 2) / (12 * g0 ** 2 * q ** 2)
    b = p.lam / (g0 * q ** 2)
    return a, b, 4 * a ** 3 + b ** 2


def cardano_equilibrium(p: QuadraticParams, q: float) -> float:
    """Unique real root ``e(q)`` of ``x^3 + 3 a x + b = 0`` for ``D > 0``.

    The two cube roots multiply to ``-a``; the smaller one is recovered from
    that product to avoid cancellation when ``D`` is close to ``b^2``.
    """
    if q == 0:
        raise DiscriminantError("q must be nonzero")
    a, b, D = cardano_coefficients(p, q)
    if not D > 0:
        raise DiscriminantError(f"discriminant {D:.3g} <= 0 at q={q:g}; enlarge |q|")
    s = math.sqrt(D)
    big = -0.5 * b - math.copysign(0.5 * s, b) if b != 0 else 0.5 * s
    t1 = _cbrt(big)
    t2 = -a / t1 if t1 != 0 else _cbrt(-0.5 * b + 0.5 * s)
    return t1 + t2


def quad_closed_coeffs(p: QuadraticParams, q: float, k: Optional[float] = None) -> np.ndarray:
    """Ascending coefficients of the closed loop under ``u = k x + q x^2``."""
    k = p.k if k is None else k
    return np.array([0.0, p.lam, p.alpha0 + p.beta0 * k + p.gamma0 * k * k,
                     q * (p.beta0 + 2 * p.gamma0 * k), p.gamma0 * q * q])


def quad_jacobian(p: QuadraticParams, q: float, x: float) -> float:
    """Slope of the closed loop, ``l + 2 D x + 4 g0 q^2 x^3`` (with ``k = -b0 / 2 g0``)."""
    return p.lam + 2 * p.delta * x + 4 * p.gamma0 * q * q * x ** 3


def _eq_residual(p: QuadraticParams, q: float, x: float) -> float:
    return float(np.polynomial.polynomial.polyval(x, quad_closed_coeffs(p, q)))


# ---------------------------------------------------------------------------
# cubic model

def pwl_equilibria(p: CubicParams, k1: float, k2: float) -> list[tuple[float, float]]:
    """``[(e1, J(e1)), (e2, J(e2))]`` with ``e2 < 0 < e1`` for the feedback
    ``k1 x`` on ``x >= 0`` and ``k2 x`` on ``x < 0``."""
    out = []
    for side, k in ((1, k1), (-1, k2)):
        if np.sign(k) != -np.sign(p.eta1):
            raise ValueError(f"gain {k:g} must have sign opposite to eta1")
        d0, d1 = p.deltas(k)
        disc = d0 * d0 - 4 * p.lam * d1
        if not disc > 0 or d1 == 0:
            raise ValueError(f"discriminant {disc:.3g} <= 0 for gain {k:g}; enlarge |k|")
        sq = math.sqrt(disc)
        # x- = (-d0 - sq) / (2 d1) and x+ = (-d0 + sq) / (2 d1), without cancellation
        t = -0.5 * (d0 + math.copysign(sq, d0))
        x_minus, x_plus = (t / d1, p.lam / t) if d0 >= 0 else (p.lam / t, t / d1)
        if side > 0:
            e = x_minus
            jac = -e * sq
            if not e > 0:
                raise ValueError(f"positive equilibrium missing for k1={k:g}; enlarge |k1|")
        else:
            e = x_plus
            jac = e * sq
            if not e < 0:
                raise ValueError(f"negative equilibrium missing for k2={k:g}; enlarge |k2|")
        out.append((float(e), float(jac)))
    return out


def pwl_residual(p: CubicParams, k: float, x: float) -> float:
    d0, d1 = p.deltas(k)
    return p.lam + d0 * x + d1 * x * x


# ---------------------------------------------------------------------------
# chain

def chain_equilibrium(p: ChainParams) -> np.ndarray:
    """The nonzero equilibrium of the closed chain (``x2 = c x1``, other ``z = 0``)."""
    c = -p.k1 / p.K2[0]
    den = p.alpha0 + p.beta0 * c + p.gammas[0] * c * c
    if den == 0:
        raise ValueError("no nonzero equilibrium")
    x1 = -p.lam / den
    e = np.zeros(p.d)
    e[0], e[1] = x1, c * x1
    return e


def chain_attractors(p: ChainParams, seeds, T: float = 60.0, dt: float = 1e-2, tol: float = 1e-6):
    """Forward-simulate the closed chain from ``seeds``; return the distinct
    limit points reached (within ``tol``) and the per-seed final states."""
    sys, fb = chain_system(p, Box([-1e9], [1e9]))
    x = np.atleast_2d(np.asarray(seeds, dtype=float))
    cl = lambda xx, _u: sys.field(xx, fb(xx))
    n = _ratio(T, dt, "T", "dt")
    with np.errstate(all="ignore"):
        for _ in range(n):
            x = rk4_step(cl, x, None, dt)
    finite = np.all(np.isfinite(x) & (np.abs(x) < BLOWUP_THRESHOLD), axis=1)
    speed = np.max(np.abs(cl(np.where(finite[:, None], x, 0.0), None)), axis=1)
    settled = finite & (speed < tol)
    limits: list[np.ndarray] = []
    for xi in x[settled]:
        if not any(np.max(np.abs(xi - l)) < 1e-4 for l in limits):
            limits.append(xi.copy())
    return limits, x


def chain_divergence_min(p: ChainParams, eps: float) -> float:
    return p.lam - (2 * abs(p.alpha0) + abs(p.beta0)) * eps


def chain_lipschitz(p: ChainParams, radius: float) -> float:
    return max(1.0, p.lam + (2 * abs(p.alpha0) + abs(p.beta0) + 2 * sum(abs(g) for g in p.gammas)) * radius)


# ---------------------------------------------------------------------------
# analytic bound values

def quadratic_exponential_lower(p: QuadraticParams, alpha: float, eps: float, control_range: Box) -> float:
    """``alpha + l - 2|a0| eps + min_U b0 u - |a0| eps``; equals
    ``alpha + l - 3|a0| eps`` when ``b0 u >= 0`` on ``U``."""
    umin = min(p.beta0 * control_range.lower[0], p.beta0 * control_range.upper[0])
    return alpha + p.lam - 3 * abs(p.alpha0) * eps + umin


def quadratic_truncation_slack(p: QuadraticParams, eps: float) -> float:
    return abs(p.alpha0) * eps


def quadratic_sign_case(p: QuadraticParams, control_range: Box) -> bool:
    """True for ``b0 > 0`` with ``U`` in ``[0, inf)`` or ``b0 < 0`` with ``U`` in
    ``(-inf, 0]``, and ``sign(g0) = -sign(b0)``."""
    lo, hi = control_range.lower[0], control_range.upper[0]
    if np.sign(p.gamma0) != -np.sign(p.beta0):
        return False
    return (p.beta0 > 0 and lo >= 0) or (p.beta0 < 0 and hi <= 0)


def cubic_divergence(p: CubicParams, x, u):
    return (p.lam + 2 * p.alpha0 * x + p.beta0 * u + 3 * p.alpha1 * x * x
            + 2 * p.beta1 * x * u + p.gamma1 * u * u)


def cubic_divergence_min(p: CubicParams, eps: float, control_range: Box, n: int = 20001) -> float:
    """Minimum of the divergence over ``|x| <= eps`` and ``u`` in ``U``; the
    minimum over ``u`` is taken in closed form."""
    xs = np.linspace(-eps, eps, n)
    lo, hi = control_range.lower[0], control_range.upper[0]
    cands = [np.full_like(xs, lo), np.full_like(xs, hi)]
    if p.gamma1 > 0:
        cands.append(np.clip(-(p.beta0 + 2 * p.beta1 * xs) / (2 * p.gamma1), lo, hi))
    return float(min(np.min(cubic_divergence(p, xs, u)) for u in cands))


def cubic_exponential_limit(p: CubicParams, alpha: float) -> float:
    """``alpha + l - b0^2 / (4 g1)``: the small-``eps`` limit for ``g1 > 0``."""
    if not p.gamma1 > 0:
        raise ValueError("needs gamma1 > 0")
    return alpha + p.lam - p.beta0 ** 2 / (4 * p.gamma1)


# ---------------------------------------------------------------------------
# closed-loop sweeps

@dataclass
class Sweep:
    margin: np.ndarray
    margin_time: np.ndarray
    margin_state: np.ndarray
    ratio: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray
    final: np.ndarray
    diverged_at: np.ndarray
    dt: float


def _fast_ok(system, feedback, zeta, target) -> bool:
    return (system.poly is not None and getattr(feedback, "pieces", None) is not None
            and (zeta is None or isinstance(zeta, ExponentialKL))
            and (target is None or target.dim == 1))


def sample_dt(dt: float, T: float) -> float:
    """Largest step no larger than ``dt`` that divides ``T``."""
    return T / math.ceil(T / dt - 1e-9)


def closed_loop_sweep(system: ControlSystem, feedback, x0s, T: float, dt: float,
                      zeta: Optional[KLFunction] = None, eps: float = 0.0, target: Optional[Box] = None,
                      fit_alpha: float = 0.0, equilibrium=None, fast: Optional[bool] = None) -> Sweep:
    """Stream the closed loop from each seed and reduce to per-seed statistics.

    ``margin`` is ``min_t [zeta(d(x0, L), t) + eps - d(x(t), L)]``; ``ratio`` is
    ``max_t e^{fit_alpha t} ||x(t) - e|| / ||x0 - e||``.  With ``fast`` (the
    default when available) scalar polynomial loops run compiled.
    """
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    if x0s.shape[1] != system.dim_state:
        x0s = x0s.reshape(-1, system.dim_state)
    nsteps = _ratio(T, dt, "T", "dt")
    target = Box.point(np.zeros(system.dim_state)) if target is None else target
    e = np.zeros(system.dim_state) if equilibrium is None else np.atleast_1d(np.asarray(equilibrium, float))
    if fast is None:
        fast = _fast_ok(system, feedback, zeta, target)
    if fast:
        gp, gn = compose_pieces(system.poly, *feedback.pieces)
        za, zm = (zeta.alpha, zeta.big_m) if zeta is not None else (1.0, 1.0)
        st = simulate_scalar(x0s[:, 0], gp, gn, feedback.pieces[0], feedback.pieces[1], dt, nsteps,
                             za, zm, eps if zeta is not None else np.inf,
                             (target.lower[0], target.upper[0]), fit_alpha, e[0], RATIO_FLOOR)
        return Sweep(st.margin, st.margin_time, st.margin_state[:, None], st.ratio, st.u_min[:, None],
                     st.u_max[:, None], st.final[:, None], st.diverged_at, dt)
    return _sweep_numpy(system, feedback, x0s, nsteps, dt, zeta, eps, target, fit_alpha, e)


def _sweep_numpy(system, feedback, x0s, nsteps, dt, zeta, eps, target, fit_alpha, e) -> Sweep:
    n = x0s.shape[0]
    cl = lambda xx, _u: system.field(xx, feedback(xx))
    x = x0s.copy()
    r0 = target.distance(x)
    d0e = np.max(np.abs(x - e), axis=1)
    useful = d0e > RATIO_FLOOR
    env = (lambda t: zeta(r0, t) + eps) if zeta is not None else (lambda t: np.full(n, np.inf))
    margin = env(0.0) - r0
    mt = np.zeros(n)
    mx = x.copy()
    ratio = np.where(useful, 1.0, 0.0)
    u = feedback(x)
    umin, umax = u.copy(), u.copy()
    div = np.full(n, -1.0)
    alive = np.ones(n, dtype=bool)
    with np.errstate(all="ignore"):
        for i in range(1, nsteps + 1):
            t = i * dt
            x = np.where(alive[:, None], rk4_step(cl, x, None, dt), x)
            blown = alive & ~np.all(np.abs(x) <= BLOWUP_THRESHOLD, axis=1)
            if blown.any():
                div[blown] = t
                margin[blown] = -np.inf
                mt[blown] = t
                mx[blown] = x[blown]
                alive &= ~blown
                x = np.where(alive[:, None], x, 0.0)
            m = env(t) - target.distance(x)
            worse = alive & (m < margin)
            margin = np.where(worse, m, margin)
            mt = np.where(worse, t, mt)
            mx = np.where(worse[:, None], x, mx)
            de = np.max(np.abs(x - e), axis=1)
            rr = np.exp(fit_alpha * t) * de / np.where(useful, d0e, 1.0)
            ok = alive & useful & (de > RATIO_FLOOR)
            ratio = np.where(ok & (rr > ratio), rr, ratio)
            u = feedback(x)
            umin = np.where(alive[:, None], np.minimum(umin, u), umin)
            umax = np.where(alive[:, None], np.maximum(umax, u), umax)
    final = np.where((div >= 0)[:, None], mx, x)
    return Sweep(margin, mt, mx, ratio, umin, umax, final, div, dt)


def fit_overshoot_M(system: ControlSystem, feedback, gamma_grid, alpha: float, equilibrium,
                    T: float, dt: float, fast: Optional[bool] = None, sweep: Optional[Sweep] = None) -> float:
    """``max e^{alpha t} ||psi(t) - e|| / ||x0 - e||`` over the grid and sample
    times, at least 1, inflated by 5%.

    Seeds at ``e`` or at the origin (an equilibrium of every loop here) are
    skipped, as are samples within ``1e-10`` of ``e``.  Raises
    :class:`NonAttractionError` if a trajectory ends farther from ``e`` than
    it started.
    """
    grid = np.atleast_2d(np.asarray(gamma_grid, dtype=float))
    if grid.shape[1] != system.dim_state:
        grid = grid.reshape(-1, system.dim_state)
    e = np.atleast_1d(np.asarray(equilibrium, dtype=float))
    keep = (np.max(np.abs(grid - e), axis=1) > RATIO_FLOOR) & (np.max(np.abs(grid), axis=1) > 0)
    if not keep.any():
        return 1.0
    grid = grid[keep]
    sw = sweep or closed_loop_sweep(system, feedback, grid, T, dt, fit_alpha=alpha, equilibrium=e, fast=fast)
    d0 = np.max(np.abs(grid - e), axis=1)
    d1 = np.max(np.abs(sw.final - e), axis=1)
    bad = np.nonzero((d1 > d0) | (sw.diverged_at >= 0))[0]
    if bad.size:
        raise NonAttractionError(f"{bad.size} seeds are not attracted to {e.tolist()}", grid[bad].tolist())
    m = max(1.0, float(np.max(sw.ratio))) * M_INFLATION
    if m > 1e6:
        warnings.warn(f"fitted overshoot {m:.3g} exceeds 1e6; alpha may exceed the true decay rate",
                      stacklevel=2)
    return m


# ---------------------------------------------------------------------------
# verification

@dataclass
class VerifyReport:
    passed: bool
    margins: np.ndarray
    worst_index: int
    worst_margin: float
    worst_time: float
    worst_state: list
    within_range: bool
    u_min: float
    u_max: float
    dt: float
    T: float
    epsilon: float

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "worst_margin": self.worst_margin,
            "worst_index": self.worst_index,
            "worst_time": self.worst_time,
            "worst_state": self.worst_state,
            "within_range": self.within_range,
            "u_min": self.u_min,
            "u_max": self.u_max,
            "dt": self.dt,
            "T": self.T,
            "epsilon": self.epsilon,
            "n_points": int(self.margins.size),
            "min_margin_per_point": self.margins.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=2, allow_nan=False) + "\n"


def verify_practical_stability(system: ControlSystem, feedback, gamma_grid, zeta_eps: KLFunction,
                               eps: float, T: float, dt: float, target: Optional[Box] = None,
                               fast: Optional[bool] = None) -> VerifyReport:
    """Worst margin ``min_t [zeta(d(x0, L), t) + eps - d(psi(t), L)]`` per grid
    point on ``[0, T]``; passes iff every margin is nonnegative and the
    feedback stays in the control range (and within ``rho`` if set)."""
    target = Box.point(np.zeros(system.dim_state)) if target is None else target
    sw = closed_loop_sweep(system, feedback, gamma_grid, T, dt, zeta_eps, eps, target, fast=fast)
    U = system.control_range
    rho = getattr(feedback, "rho", None)
    lo_ok = np.all(sw.u_min >= U.lower - 1e-12) and np.all(sw.u_max <= U.upper + 1e-12)
    if rho is not None:
        lo_ok = lo_ok and np.all(np.abs(sw.u_min) <= rho * (1 + 1e-12)) and np.all(np.abs(sw.u_max) <= rho * (1 + 1e-12))
    i = int(np.argmin(sw.margin))
    return VerifyReport(
        bool(np.all(sw.margin >= 0) and lo_ok), sw.margin, i, float(sw.margin[i]),
        float(sw.margin_time[i]), np.asarray(sw.margin_state[i]).tolist(), bool(lo_ok),
        float(np.min(sw.u_min)), float(np.max(sw.u_max)), dt, T, eps,
    )


# ---------------------------------------------------------------------------
# synthesis

def _finish(system, fb, T, dt, alpha, groups):
    """Fitted ``M`` and the largest ``|u|`` over seed groups, each attracted to its own equilibrium."""
    ms, umax = [], 0.0
    for seeds, e in groups:
        seeds = seeds[(seeds != e) & (seeds != 0)]
        if seeds.size == 0:
            continue
        sw = closed_loop_sweep(system, fb, seeds, T, dt, fit_alpha=alpha, equilibrium=e)
        ms.append(fit_overshoot_M(system, fb, seeds, alpha, e, T, dt, sweep=sw))
        umax = max(umax, float(np.max(np.abs(sw.u_min))), float(np.max(np.abs(sw.u_max))))
    return (max(ms) if ms else 1.0), umax


def synthesize_quadratic(p: QuadraticParams, eps: float, alpha: float, gamma_set: Box,
                         T_fit: float = 20.0, dt: float = 1e-3, grid_points: int = 101,
                         q_start: float = 1.0) -> SynthesisResult:
    """Gains ``k = -b0 / (2 g0)`` and ``|q|`` doubled from ``q_start`` until the
    equilibrium ``e(q)`` has slope below ``-alpha``, ``Gamma`` lies beyond it
    (seen from the origin), and ``|e| < eps / (2 M)`` for the fitted overshoot
    ``M``.

    The sign of ``q`` is ``-sign(g0)`` so the feedback takes values in
    ``[0, rho]`` for ``g0 < 0`` and ``[-rho, 0]`` for ``g0 > 0``.
    """
    if not 0 < alpha < 3 * p.lam:
        raise ValueError("alpha must lie in (0, 3 lambda)")
    if p.gamma0 < 0 and not gamma_set.lower[0] > 0:
        raise ValueError("gamma0 < 0 needs Gamma inside (0, inf)")
    if p.gamma0 > 0 and not gamma_set.upper[0] < 0:
        raise ValueError("gamma0 > 0 needs Gamma inside (-inf, 0)")
    grid = gamma_set.grid(grid_points)[:, 0]
    sign = -float(np.sign(p.gamma0))
    mag = float(q_start)
    diag = []
    for it in range(1, MAX_DOUBLINGS + 1):
        q = sign * mag
        mag *= 2.0
        a, b, D = cardano_coefficients(p, q)
        if not D > 0:
            diag.append({"q": q, "fail": "discriminant"})
            continue
        e = cardano_equilibrium(p, q)
        J = quad_jacobian(p, q, e)
        side = gamma_set.lower[0] > e if p.gamma0 < 0 else gamma_set.upper[0] < e
        if not (J < -alpha and side and np.sign(e) == -np.sign(p.gamma0)):
            diag.append({"q": q, "e": e, "J": J, "fail": "jacobian or side"})
            continue
        if abs(e) >= eps / 2:
            diag.append({"q": q, "e": e, "fail": "equilibrium too far"})
            continue
        fb = FeedbackLaw.quadratic(p.k, q)
        sys0 = quadratic_system(p, Box([-1e300], [1e300]))
        h = sample_dt(dt, T_fit)
        m_hat, umax = _finish(sys0, fb, T_fit, h, alpha, [(grid, e)])
        if not abs(e) < eps / (2 * m_hat):
            diag.append({"q": q, "e": e, "M": m_hat, "fail": "equilibrium too far"})
            continue
        rho = RHO_INFLATION * umax
        U = Box([0.0], [rho]) if p.gamma0 < 0 else Box([-rho], [0.0])
        system = quadratic_system(p, U, "quadratic")
        return SynthesisResult(
            {"k": p.k, "q": q}, [(e, J)], ExponentialKL(alpha, m_hat), rho, eps,
            fb.with_rho(rho), system, U, h, T_fit, it, m_hat,
        )
    raise SynthesisError("no admissible q after 60 doublings", {"history": diag[-5:]})


def synthesize_pwl(p: CubicParams, eps: float, alpha: float, gamma_set: Box,
                   T_fit: float = 20.0, dt: float = 1e-3, grid_points: int = 101,
                   k_start: float = 1.0) -> SynthesisResult:
    """Equal gains ``k1 = k2 = -sign(h1) s`` with ``s`` doubled from ``k_start``
    until both equilibria have slope below ``-alpha`` and lie within
    ``eps / (2 M)`` of the origin; control range ``[-rho, rho]``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    grid = gamma_set.grid(grid_points)[:, 0]
    sign = -float(np.sign(p.eta1))
    s = float(k_start)
    diag = []
    for it in range(1, MAX_DOUBLINGS + 1):
        k = sign * s
        s *= 2.0
        try:
            (e1, j1), (e2, j2) = pwl_equilibria(p, k, k)
        except ValueError as err:
            diag.append({"k": k, "fail": str(err)})
            continue
        if not (j1 < -alpha and j2 < -alpha) or max(e1, -e2) >= eps / 2:
            diag.append({"k": k, "e": [e1, e2], "J": [j1, j2], "fail": "slope or distance"})
            continue
        fb = FeedbackLaw.piecewise_linear(k, k)
        sys0 = cubic_system(p, Box([-1e300], [1e300]))
        h = sample_dt(dt, T_fit)
        pos, neg = grid[grid > 0], grid[grid < 0]
        m_hat, umax = _finish(sys0, fb, T_fit, h, alpha, [(pos, e1), (neg, e2)])
        if not max(e1, -e2) < eps / (2 * m_hat):
            diag.append({"k": k, "e": [e1, e2], "M": m_hat, "fail": "equilibrium too far"})
            continue
        rho = RHO_INFLATION * umax
        U = Box([-rho], [rho])
        system = cubic_system(p, U, "cubic")
        return SynthesisResult(
            {"k1": k, "k2": k}, [(e1, j1), (e2, j2)], ExponentialKL(alpha, m_hat), rho, eps,
            fb.with_rho(rho), system, U, h, T_fit, it, m_hat,
        )
    raise SynthesisError("no admissible gains after 60 doublings", {"history": diag[-5:]})
