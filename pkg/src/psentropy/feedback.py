"""Feedback laws, feedback entropy and its comparison with stabilization entropy.

A seed ``y`` of the grid covers ``x0`` on ``[0, tau]`` when ``||x0 - y|| < eps``
and, under the recorded feedback signal ``u_y(t) = k(psi(t, y))``,

    ||phi(t, x0, u_y) - phi(t, y, u_y)|| <= zeta(||x0 - y|| + eps, t).

Both trajectories are open-loop replays of the same sampled signal.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bounds import _clean
from .cover import InfeasibleCoverError, assignment, solve_cover
from .dynamics import (
    Box,
    ControlSystem,
    KLFunction,
    _ratio,
    closed_loop_batch,
    integrate_batch,
)
from .spanning import (
    CandidatePool,
    EntropyEstimate,
    SpanningMode,
    SpanningResult,
    entropy_rate,
    fit_rate,
    pair_violation_steps,
)


class GridResolutionError(ValueError):
    """The seed grid is too coarse for the shrinking cover radius."""


class PreconditionError(ValueError):
    def __init__(self, message, violations=()):
        self.violations = list(violations)
        super().__init__(message)


# ---------------------------------------------------------------------------
# feedback laws

@dataclass(frozen=True)
class FeedbackLaw:
    """Batched state feedback ``k(x)``: ``(n, d) -> (n, m)``.

    ``pieces`` holds ascending polynomial coefficients of a scalar law on
    ``x >= 0`` and ``x < 0``; it enables the compiled closed-loop path.
    """

    kind: str
    params: dict
    fn: Callable = field(repr=False, compare=False)
    rho: Optional[float] = None
    pieces: Optional[tuple] = field(default=None, repr=False, compare=False)

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))

    def with_rho(self, rho: Optional[float]) -> "FeedbackLaw":
        return FeedbackLaw(self.kind, self.params, self.fn, rho, self.pieces)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **{k: _clean(v) for k, v in self.params.items()}, "rho": self.rho}

    @classmethod
    def linear(cls, k_matrix, rho=None) -> "FeedbackLaw":
        K = np.atleast_2d(np.asarray(k_matrix, dtype=float))
        pieces = None
        if K.shape == (1, 1):
            c = np.array([0.0, K[0, 0]])
            pieces = (c, c)
        return cls("linear", {"K": K.tolist()}, lambda x: x @ K.T, rho, pieces)

    @classmethod
    def quadratic(cls, k: float, q: float, rho=None) -> "FeedbackLaw":
        """``u = k x + q x^2`` (scalar)."""
        c = np.array([0.0, k, q])
        return cls("quadratic", {"k": float(k), "q": float(q)}, lambda x: k * x + q * x * x, rho, (c, c))

    @classmethod
    def piecewise_linear(cls, k1: float, k2: float, rho=None) -> "FeedbackLaw":
        """``u = k1 x`` for ``x >= 0`` and ``u = k2 x`` for ``x < 0`` (scalar)."""
        return cls("piecewise_linear", {"k1": float(k1), "k2": float(k2)},
                   lambda x: np.where(x >= 0, k1 * x, k2 * x), rho,
                   (np.array([0.0, k1]), np.array([0.0, k2])))

    @classmethod
    def custom(cls, fn: Callable, rho=None, name: str = "custom") -> "FeedbackLaw":
        return cls(name, {}, fn, rho)


def companion_gain(poles) -> np.ndarray:
    """Row gain ``K`` placing the eigenvalues of ``shift + e_last K`` at ``poles``.

    ``shift`` is the upper shift matrix (a chain of integrators).
    """
    c = np.real_if_close(np.poly(np.asarray(poles)))
    if np.iscomplexobj(c):
        raise ValueError("poles must be closed under conjugation")
    return -np.asarray(c[1:], dtype=float)[::-1]


def pole_margin(a_matrix, b_matrix, k_matrix, alpha: float) -> float:
    """``-alpha - max Re eig(A + B K)``; positive when the decay margin holds."""
    A = np.atleast_2d(np.asarray(a_matrix, dtype=float))
    B = np.atleast_2d(np.asarray(b_matrix, dtype=float))
    K = np.atleast_2d(np.asarray(k_matrix, dtype=float))
    return float(-alpha - np.max(np.linalg.eigvals(A + B @ K).real))


def ball_cover_count(gamma: Box, radius: float) -> int:
    """Number of max-norm balls of ``radius`` needed to cover the box."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    n = np.maximum(np.ceil(gamma.sides / (2.0 * radius) - 1e-12), 1)
    return int(np.prod(n.astype(np.int64)))


# ---------------------------------------------------------------------------
# feedback entropy

@dataclass
class FeedbackSpanning(SpanningResult):
    binding: str = "ball"
    ball_pairs: int = 0
    envelope_failures: int = 0


@dataclass
class FeedbackEstimate:
    estimate: EntropyEstimate
    covers: list

    @property
    def rate(self) -> float:
        return self.estimate.rate

    def to_dict(self) -> dict:
        d = self.estimate.to_dict()
        d["binding"] = [c.binding for c in self.covers]
        d["envelope_failures"] = [c.envelope_failures for c in self.covers]
        d["ball_pairs"] = self.covers[0].ball_pairs if self.covers else 0
        return d


def _seed_signals(system, feedback, grid, tau, dt, step):
    _, controls = closed_loop_batch(system, feedback, grid, tau, dt, step)
    ref = integrate_batch(system, grid, controls, step, tau, dt)
    return controls, ref


def _ball_pairs(grid: np.ndarray, eps: float):
    """Index pairs (point, seed) with ``||x - y|| < eps``, seeds ascending per point."""
    pts, seeds = [], []
    for p in range(grid.shape[0]):
        close = np.nonzero(np.max(np.abs(grid - grid[p]), axis=-1) < eps)[0]
        pts.append(np.full(close.size, p))
        seeds.append(close)
    return np.concatenate(pts), np.concatenate(seeds)


def feedback_violation_steps(system: ControlSystem, feedback, gamma_grid, zeta: KLFunction, eps: float,
                             tau: float, dt: float, control_step: Optional[float] = None, jobs: int = 1):
    """First violating sample of every admissible (point, seed) pair."""
    grid = np.atleast_2d(np.asarray(gamma_grid, dtype=float))
    step = dt if control_step is None else control_step
    controls, ref = _seed_signals(system, feedback, grid, tau, dt, step)
    p_idx, s_idx = _ball_pairs(grid, eps)
    r0 = np.max(np.abs(grid[p_idx] - grid[s_idx]), axis=-1)
    steps = pair_violation_steps(system, grid[p_idx], s_idx, r0, controls, step, tau, dt, zeta,
                                 eps, 0.0, reference=ref, jobs=jobs)
    return p_idx, s_idx, steps


def _cover_at(n_points, p_idx, s_idx, steps, n_tau, tau, method):
    C = np.zeros((n_points, n_points), dtype=bool)
    ok = steps > n_tau
    C[s_idx[ok], p_idx[ok]] = True
    try:
        chosen, used = solve_cover(C, method)
    except InfeasibleCoverError as err:
        raise err.with_horizon(tau) from None
    fails = int((~ok).sum())
    return FeedbackSpanning(float(tau), len(chosen), assignment(C, chosen), used, list(chosen),
                            binding="envelope" if fails else "ball", ball_pairs=int(p_idx.size),
                            envelope_failures=fails), C


def _check_resolution(C: np.ndarray, tau: float):
    n = C.shape[0]
    if n > 1:
        lonely = int(np.sum(C.sum(axis=1) <= 1))
        if 2 * lonely > n:
            raise GridResolutionError(
                f"{lonely} of {n} seeds cover only themselves at tau={tau:g}; refine the grid")


def feedback_spanning_count(system: ControlSystem, feedback, gamma_grid, zeta: KLFunction, eps: float,
                            tau: float, dt: float, control_step: Optional[float] = None,
                            method: str = "greedy", jobs: int = 1) -> FeedbackSpanning:
    grid = np.atleast_2d(np.asarray(gamma_grid, dtype=float))
    p_idx, s_idx, steps = feedback_violation_steps(system, feedback, grid, zeta, eps, tau, dt,
                                                   control_step, jobs)
    res, _ = _cover_at(grid.shape[0], p_idx, s_idx, steps, _ratio(tau, dt, "tau", "dt"), tau, method)
    return res


def feedback_entropy_rate(system: ControlSystem, feedback, gamma_grid, zeta: KLFunction, eps: float,
                          horizons: Sequence[float], dt: float, control_step: Optional[float] = None,
                          method: str = "greedy", jobs: int = 1,
                          check_resolution: bool = True) -> FeedbackEstimate:
    hs = [float(h) for h in horizons]
    if len(hs) < 3 or any(b <= a for a, b in zip(hs, hs[1:])):
        raise ValueError("horizons must be increasing with at least 3 entries")
    grid = np.atleast_2d(np.asarray(gamma_grid, dtype=float))
    p_idx, s_idx, steps = feedback_violation_steps(system, feedback, grid, zeta, eps, hs[-1], dt,
                                                   control_step, jobs)
    covers = []
    C = None
    for h in hs:
        res, C = _cover_at(grid.shape[0], p_idx, s_idx, steps, _ratio(h, dt, "horizon", "dt"), h, method)
        covers.append(res)
    if check_resolution:
        _check_resolution(C, hs[-1])
    counts = [c.count for c in covers]
    rate, rate_max = fit_rate(hs, counts)
    est = EntropyEstimate(hs, counts, rate, rate_max, [c.method for c in covers],
                          [c.count >= grid.shape[0] for c in covers], grid.shape[0], grid.shape[0])
    return FeedbackEstimate(est, covers)


# ---------------------------------------------------------------------------
# comparison with the stabilization entropy

@dataclass
class Check42Report:
    """Rates are ``log N(tau_max) / tau_max``; fitted slopes are kept as diagnostics."""

    lhs_rate: float
    rhs_rate: float
    passed: bool
    slack: float
    lhs: dict
    rhs: dict
    counts_ordered: bool = True
    precondition_ok: bool = True
    violations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "spanning_rate_2eps_2zeta": self.lhs_rate,
            "feedback_rate": self.rhs_rate,
            "slack": self.slack,
            "pass": self.passed,
            "counts_ordered": self.counts_ordered,
            "spanning_fitted_slope": self.lhs["rate"],
            "feedback_fitted_slope": self.rhs["rate"],
            "precondition_ok": self.precondition_ok,
            "violations": self.violations,
            "spanning": self.lhs,
            "feedback": self.rhs,
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=2, allow_nan=False) + "\n"


def stability_violations(system: ControlSystem, feedback, gamma_grid, zeta: KLFunction, eps: float,
                         target: Box, tau: float, dt: float) -> list:
    """Grid points whose closed loop leaves ``zeta(d(x0, L) + eps, t)`` on ``[0, tau]``.

    Each entry is ``(index, time, distance, allowed)`` at the first violation.
    """
    grid = np.atleast_2d(np.asarray(gamma_grid, dtype=float))
    states, _ = closed_loop_batch(system, feedback, grid, tau, dt)
    t = dt * np.arange(states.shape[1])
    dist = target.distance(states)
    allowed = zeta(target.distance(grid)[:, None] + eps, t[None, :])
    bad = dist > allowed
    out = []
    for i in np.nonzero(bad.any(axis=1))[0]:
        j = int(np.argmax(bad[i]))
        out.append((int(i), float(t[j]), float(dist[i, j]), float(allowed[i, j])))
    return out


def proposition42_check(system: ControlSystem, feedback, gamma_grid, zeta: KLFunction, eps: float,
                        horizons: Sequence[float], dt: float, target: Optional[Box] = None,
                        control_step: Optional[float] = None, slack: float = 0.10,
                        jobs: int = 1) -> Check42Report:
    """Strict spanning rate with ``2 eps`` and ``2 zeta`` (feedback candidates)
    against the feedback entropy rate at ``eps``; passes when
    ``lhs <= rhs + slack * |rhs|``.

    Both rates are ``log N(tau_max) / tau_max``.  A feedback cover is itself a
    strict cover with the doubled quantities, so the counts are ordered at
    every horizon; slopes fitted over a few horizons are not (the strict count
    often sits at 1 early on), so they are only reported.

    Raises :class:`PreconditionError` when the closed loop leaves
    ``zeta(d(x0, L) + eps, t)`` somewhere on the grid before the largest horizon.
    """
    grid = np.atleast_2d(np.asarray(gamma_grid, dtype=float))
    target = Box.point(np.zeros(system.dim_state)) if target is None else target
    hs = [float(h) for h in horizons]
    viol = stability_violations(system, feedback, grid, zeta, eps, target, hs[-1], dt)
    if viol:
        raise PreconditionError(f"closed loop violates the envelope at {len(viol)} grid points", viol)
    step = dt if control_step is None else control_step
    controls, _ = _seed_signals(system, feedback, grid, hs[-1], dt, step)
    pool = CandidatePool(step, controls, grid.copy(), ("fb0",) * grid.shape[0])
    lhs = entropy_rate(system, grid, pool, zeta.scaled(2.0), SpanningMode("strict", 2.0 * eps), target,
                       hs, dt, jobs=jobs)
    rhs = feedback_entropy_rate(system, feedback, grid, zeta, eps, hs, dt, control_step, jobs=jobs,
                                check_resolution=False)
    a, b = lhs.rate_at_max, rhs.estimate.rate_at_max
    ok = a <= b + slack * abs(b)
    ordered = all(x <= y for x, y in zip(lhs.counts, rhs.estimate.counts))
    return Check42Report(a, b, bool(ok), slack, lhs.to_dict(), rhs.to_dict(), bool(ordered))
