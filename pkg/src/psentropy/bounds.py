"""Closed-form upper and lower entropy bounds.

Extrema of ``||f_x||`` and ``tr f_x`` over boxes are found by a tensor grid
scan followed by bounded Powell polishing from the best grid points.  Safety
factors act on the spread of the sampled values rather than on the extremum
itself, so constant Jacobians (linear systems) give exact bounds:

    upper = max + (s - 1) * (max - min)
    lower = min - (s - 1) * (max - min)
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import schur
from scipy.optimize import minimize

from .dynamics import Box, ControlSystem, ExponentialKL, KLFunction, matrix_norm_max

BOUNDARY_TOL = 1e-9


# ---------------------------------------------------------------------------
# box extrema

def box_extrema(fn: Callable, xbox: Box, ubox: Box, grid_res: int = 21, polish: int = 3) -> tuple[float, float]:
    """``(min, max)`` of ``fn(x, u)`` over ``xbox x ubox``.

    ``fn`` is batched: ``x`` of shape ``(n, d)``, ``u`` of shape ``(n, m)``.
    """
    d = xbox.dim
    lo = np.concatenate([xbox.lower, ubox.lower])
    hi = np.concatenate([xbox.upper, ubox.upper])
    box = Box(lo, hi)
    pts = box.grid(grid_res)
    vals = np.asarray(fn(pts[:, :d], pts[:, d:]), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite values while scanning the box")
    free = np.nonzero(hi > lo)[0]
    vmin, vmax = float(vals.min()), float(vals.max())
    if polish <= 0 or free.size == 0:
        return vmin, vmax

    def scalar(z, base, sign):
        p = base.copy()
        p[free] = z
        return sign * float(fn(p[None, :d], p[None, d:])[0])

    bounds = list(zip(lo[free], hi[free]))
    for sign, order in ((1.0, np.argsort(vals, kind="stable")), (-1.0, np.argsort(-vals, kind="stable"))):
        for idx in order[:polish]:
            base = pts[idx].copy()
            res = minimize(scalar, base[free], args=(base, sign), method="Powell", bounds=bounds,
                           options={"xtol": 1e-10, "ftol": 1e-12})
            v = sign * float(res.fun)
            if sign > 0:
                vmin = min(vmin, v)
            else:
                vmax = max(vmax, v)
    return vmin, vmax


def _inflate_upper(vmin, vmax, safety):
    return vmax + (safety - 1.0) * (vmax - vmin)


def _deflate_lower(vmin, vmax, safety):
    return vmin - (safety - 1.0) * (vmax - vmin)


# ---------------------------------------------------------------------------
# sets

def compute_P_eps(gamma: Box, target: Box, zeta: KLFunction, eps: float) -> Box:
    """``{x : d(x, L) <= zeta(kappa + eps, 0) + eps}`` with ``kappa = max_{y in G} d(y, L)``."""
    kappa = gamma.far_distance(target)
    return target.inflate(float(zeta(kappa + eps, 0.0)) + eps)


def compute_P0s(gamma: Box, target: Box, big_m: float) -> Box:
    return target.inflate(big_m * gamma.far_distance(target))


# ---------------------------------------------------------------------------
# upper bounds

def _norm_fn(system):
    return lambda x, u: matrix_norm_max(system.jacobian(x, u))


def _div_fn(system):
    return lambda x, u: np.trace(system.jacobian(x, u), axis1=-2, axis2=-1)


def lipschitz_constant(system: ControlSystem, region: Box, grid_res: int = 21,
                       safety: float = 1.05) -> float:
    vmin, vmax = box_extrema(_norm_fn(system), region, system.control_range, grid_res)
    return _inflate_upper(vmin, vmax, safety)


def lipschitz_upper_bound(system: ControlSystem, gamma: Box, target: Box, zeta: KLFunction,
                          eps: float, grid_res: int = 21, safety: float = 1.05) -> float:
    """``L_eps * d`` with ``L_eps`` the largest Jacobian norm on ``P_eps x U``.

    Bounds the ``2 eps``-practical entropy.
    """
    P = compute_P_eps(gamma, target, zeta, eps)
    return lipschitz_constant(system, P, grid_res, safety) * system.dim_state


def exponential_upper_bound(system: ControlSystem, gamma: Box, target: Box, alpha: float,
                            big_m: float, grid_res: int = 21, safety: float = 1.05) -> float:
    """``(L_0 + alpha) * d`` with ``L_0`` taken over ``{d(x, L) <= M kappa} x U``."""
    P = compute_P0s(gamma, target, big_m)
    return (lipschitz_constant(system, P, grid_res, safety) + alpha) * system.dim_state


# ---------------------------------------------------------------------------
# lower bounds

def divergence_lower_bound(system: ControlSystem, target: Box, eps: float, grid_res: int = 21,
                           safety: float = 1.0) -> float:
    """Smallest divergence on the closed ``eps``-neighbourhood of the target times ``U``."""
    vmin, vmax = box_extrema(_div_fn(system), target.inflate(eps), system.control_range, grid_res)
    return _deflate_lower(vmin, vmax, safety)


def exponential_lower_bound(system: ControlSystem, alpha: float, eps: float, grid_res: int = 21,
                            safety: float = 1.0, truncation_slack: float = 0.0) -> float:
    """``alpha * d + min_{||x|| <= eps, u in U} div f(x, u) - truncation_slack``.

    For the target ``{0}`` and the envelope ``e^{-alpha s} M r``.
    ``truncation_slack`` accounts for replacing an unbounded control range by
    a compact piece of it.
    """
    ball = Box.ball(np.zeros(system.dim_state), eps)
    vmin, vmax = box_extrema(_div_fn(system), ball, system.control_range, grid_res)
    return alpha * system.dim_state + _deflate_lower(vmin, vmax, safety) - truncation_slack


# ---------------------------------------------------------------------------
# linear systems

@dataclass
class SpectralTerms:
    eigenvalues: np.ndarray
    active: np.ndarray
    boundary: np.ndarray

    @property
    def n_active(self) -> int:
        return int(self.active.sum())


def spectral_terms(a_matrix, alpha: float, tol: float = BOUNDARY_TOL) -> SpectralTerms:
    """Eigenvalues (with multiplicity) split into those with ``Re > -alpha`` and
    those within ``tol`` of the threshold, which are excluded and flagged."""
    A = np.atleast_2d(np.asarray(a_matrix, dtype=float))
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    lam = np.linalg.eigvals(A)
    re = lam.real
    boundary = np.abs(re + alpha) <= tol
    active = (re > -alpha) & ~boundary
    return SpectralTerms(lam, active, boundary)


def linear_spectral_entropy(a_matrix, alpha: float) -> float:
    """``sum_{Re l > -alpha} (alpha + Re l)``."""
    st = spectral_terms(a_matrix, alpha)
    if st.boundary.any():
        warnings.warn("eigenvalues on the threshold -alpha were excluded", stacklevel=2)
    return float(np.sum(alpha + st.eigenvalues.real[st.active]))


def topological_entropy_linear(a_matrix, alpha: float = 0.0) -> float:
    """``sum_{Re l > -alpha} Re l``; with ``alpha = 0`` the entropy of ``e^{At}``."""
    st = spectral_terms(a_matrix, alpha)
    return float(np.sum(st.eigenvalues.real[st.active]))


def projected_exponential_lower_bound(a_matrix, alpha: float) -> float:
    """Exponential lower bound on the invariant subspace of eigenvalues with ``Re > -alpha``.

    Uses an ordered real Schur form; the leading block spans that subspace and
    its trace is the divergence of the restricted flow.
    """
    A = np.atleast_2d(np.asarray(a_matrix, dtype=float))
    thr = -alpha + BOUNDARY_TOL
    T, _, sdim = schur(A, output="real", sort=lambda re, im: re > thr)
    return float(alpha * sdim + np.trace(T[:sdim, :sdim]))


def is_stabilizable(a_matrix, b_matrix, tol: float = 1e-9) -> bool:
    """Hautus test on eigenvalues with nonnegative real part."""
    A = np.atleast_2d(np.asarray(a_matrix, dtype=float))
    B = np.atleast_2d(np.asarray(b_matrix, dtype=float))
    d = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real >= -tol:
            M = np.hstack([A - lam * np.eye(d), B])
            if np.linalg.matrix_rank(M, tol=1e-8) < d:
                return False
    return True


# ---------------------------------------------------------------------------
# report

@dataclass
class BoundReport:
    lower_general: float
    lower_exponential: Optional[float]
    upper_lipschitz: float
    upper_exponential: Optional[float]
    spectral_exact: Optional[float]
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "lower_general": self.lower_general,
            "lower_exponential": self.lower_exponential,
            "upper_lipschitz": self.upper_lipschitz,
            "upper_exponential": self.upper_exponential,
            "spectral_exact": self.spectral_exact,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=2, allow_nan=False) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def bound_report(system: ControlSystem, gamma: Box, target: Box, zeta: KLFunction, eps: float,
                 grid_res: int = 21, upper_safety: float = 1.05, lower_safety: float = 1.0,
                 truncation_slack: float = 0.0) -> BoundReport:
    """Every bound that applies to the given configuration.

    The exponential bounds need an exponential envelope; the exponential lower
    bound also needs the target ``{0}``; the spectral value needs a linear
    system.
    """
    expo = isinstance(zeta, ExponentialKL)
    at_origin = target.is_point and bool(np.all(target.lower == 0))
    lower = divergence_lower_bound(system, target, eps, grid_res, lower_safety)
    upper = lipschitz_upper_bound(system, gamma, target, zeta, eps, grid_res, upper_safety)
    lower_exp = upper_exp = spectral = None
    if expo:
        upper_exp = exponential_upper_bound(system, gamma, target, zeta.alpha, zeta.big_m, grid_res, upper_safety)
        if at_origin:
            lower_exp = exponential_lower_bound(system, zeta.alpha, eps, grid_res, lower_safety, truncation_slack)
    meta = {
        "system": system.name,
        "epsilon": eps,
        "zeta": zeta.to_dict() if hasattr(zeta, "to_dict") else repr(zeta),
        "gamma": gamma.to_dict(),
        "target": target.to_dict(),
        "control_range": system.control_range.to_dict(),
        "P_eps": compute_P_eps(gamma, target, zeta, eps).to_dict(),
        "grid_res": grid_res,
        "upper_safety": upper_safety,
        "lower_safety": lower_safety,
        "truncation_slack": truncation_slack,
    }
    if system.is_linear and expo:
        A, B = system.matrices
        st = spectral_terms(A, zeta.alpha)
        spectral = float(np.sum(zeta.alpha + st.eigenvalues.real[st.active]))
        meta["stabilizable"] = is_stabilizable(A, B)
        meta["boundary_eigenvalues"] = int(st.boundary.sum())
    return BoundReport(lower, lower_exp, upper, upper_exp, spectral, meta)
