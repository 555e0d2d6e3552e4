"""Spanning sets of open-loop controls and empirical entropy rates.

A control ``u`` covers an initial state ``x0`` on ``[0, tau]`` when

    strict:     d(phi(t, x0, u), L) <= zeta(d(x0, L) + eps, t)
    practical:  d(phi(t, x0, u), L) <= zeta(d(x0, L) + eps, t) + eps

at every sample time ``t = k * dt``; violations between samples are not seen.

The coverage matrix (candidate x grid point) is built by simulating every pair
once up to the largest horizon and recording the first violating step, which
gives the matrices of all shorter horizons at no extra cost.  Pairs are
dropped from the simulation as soon as they violate.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .cover import InfeasibleCoverError, assignment, solve_cover
from .dynamics import (
    BLOWUP_THRESHOLD,
    Box,
    ControlSignal,
    ControlSystem,
    KLFunction,
    Trajectory,
    _ratio,
    closed_loop_batch,
    integrate_batch,
    rk4_step,
)
from .parallel import map_chunks

CHUNK_PAIRS = 32768


@dataclass(frozen=True)
class SpanningMode:
    kind: str
    epsilon: float
    sampling_factor: float = 1.0

    def __post_init__(self):
        if self.kind not in ("strict", "practical"):
            raise ValueError("kind must be 'strict' or 'practical'")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.sampling_factor > 0:
            raise ValueError("sampling_factor must be positive")

    @property
    def eps(self) -> float:
        return self.epsilon * self.sampling_factor

    @property
    def additive(self) -> float:
        return self.eps if self.kind == "practical" else 0.0

    def tolerance(self, zeta: KLFunction, r0, t):
        return zeta(np.asarray(r0) + self.eps, t) + self.additive


@dataclass(frozen=True)
class CandidatePool:
    """Candidate controls sharing one sample step and length.

    ``seeds`` holds the initial state that generated each feedback candidate
    (NaN rows for constant controls).
    """

    step: float
    values: np.ndarray
    seeds: np.ndarray
    labels: tuple

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, i) -> ControlSignal:
        return ControlSignal(self.step, self.values[i])

    def signals(self) -> list[ControlSignal]:
        return [self[i] for i in range(len(self))]

    @property
    def horizon(self) -> float:
        return self.step * self.values.shape[1]


@dataclass
class SpanningResult:
    horizon: float
    count: int
    assignment: dict
    method: str
    chosen: list = field(default_factory=list)


@dataclass
class EntropyEstimate:
    horizons: list
    counts: list
    rate: float
    rate_at_max: float
    methods: list = field(default_factory=list)
    saturated: list = field(default_factory=list)
    n_points: int = 0
    n_candidates: int = 0

    def rows(self):
        for tau, c, m in zip(self.horizons, self.counts, self.methods):
            yield tau, c, m, math.log(c) / tau

    def to_dict(self) -> dict:
        return {
            "horizons": [float(t) for t in self.horizons],
            "counts": [int(c) for c in self.counts],
            "rate": float(self.rate),
            "rate_at_max": float(self.rate_at_max),
            "methods": list(self.methods),
            "saturated": [bool(s) for s in self.saturated],
            "n_points": int(self.n_points),
            "n_candidates": int(self.n_candidates),
        }


CSV_COLUMNS = ("tau", "count", "method", "rate_running")


def estimate_csv(est: EntropyEstimate) -> str:
    """CSV text with columns ``tau,count,method,rate_running``.

    ``rate_running`` is the single-horizon estimate ``log(count) / tau``.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for tau, c, m, r in est.rows():
        w.writerow([repr(float(tau)), int(c), m, repr(float(r))])
    return buf.getvalue()


# ---------------------------------------------------------------------------

def check_spanning(traj: Trajectory, zeta: KLFunction, mode: SpanningMode, target: Box) -> bool:
    d0 = target.distance(traj.origin)
    dist = target.distance(traj.states)
    return bool(np.all(dist <= mode.tolerance(zeta, d0, traj.times)))


def build_candidates(system: ControlSystem, feedbacks: Sequence[Callable], gamma_grid,
                     tau: float, step: float, dt: Optional[float] = None,
                     constant_levels: int = 0, sample_hold: bool = True) -> CandidatePool:
    """Feedback-generated signals ``u_y(t) = k(psi(t, y))`` for every grid seed,
    recorded from the sampled-data loop unless ``sample_hold`` is off,
    optionally followed by ``q**m`` constant controls on a uniform lattice of
    the control range.  Exact duplicates are dropped (first kept)."""
    dt = step if dt is None else dt
    grid = np.atleast_2d(np.asarray(gamma_grid, dtype=float))
    L = _ratio(tau, step, "tau", "control step")
    values, seeds, labels = [], [], []
    for fi, k in enumerate(feedbacks):
        _, controls = closed_loop_batch(system, k, grid, tau, dt, step, sample_hold)
        for j in range(grid.shape[0]):
            values.append(controls[j])
            seeds.append(grid[j])
            labels.append(f"fb{fi}")
    if constant_levels > 0:
        U = system.control_range
        axes = [np.linspace(lo, hi, constant_levels) if constant_levels > 1 else np.array([0.5 * (lo + hi)])
                for lo, hi in zip(U.lower, U.upper)]
        mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
        for v in mesh:
            values.append(np.tile(v, (L, 1)))
            seeds.append(np.full(grid.shape[1], np.nan))
            labels.append("const")
    if not values:
        raise ValueError("no candidates: give feedbacks or constant levels")
    seen, keep = set(), []
    for i, v in enumerate(values):
        key = np.ascontiguousarray(v).tobytes()
        if key not in seen:
            seen.add(key)
            keep.append(i)
    vals = np.stack([values[i] for i in keep]).reshape(len(keep), L, system.dim_control)
    return CandidatePool(step, vals, np.stack([seeds[i] for i in keep]), tuple(labels[i] for i in keep))


# ---------------------------------------------------------------------------
# pair engine

def _pair_chunk(ci, system, x0s, cand, r0, values, sub, nsteps, dt, zeta, eps, additive,
                target, reference):
    lo = ci * CHUNK_PAIRS
    hi = min(lo + CHUNK_PAIRS, x0s.shape[0])
    x = x0s[lo:hi].copy()
    c = cand[lo:hi].copy()
    r = r0[lo:hi].copy()
    idx = np.arange(hi - lo)
    vstep = np.full(hi - lo, nsteps + 1, dtype=np.int64)

    def measure(xx, cc, i):
        if reference is None:
            return target.distance(xx)
        return np.max(np.abs(xx - reference[cc, i]), axis=-1)

    with np.errstate(all="ignore"):
        bad = ~(measure(x, c, 0) <= zeta(r + eps, 0.0) + additive)
        for i in range(nsteps + 1):
            if i > 0:
                x = rk4_step(system.field, x, values[c, (i - 1) // sub], dt)
                m = measure(x, c, i)
                bad = ~(m <= zeta(r + eps, i * dt) + additive)
                bad |= ~np.all(np.abs(x) <= BLOWUP_THRESHOLD, axis=-1)
            if bad.any():
                vstep[idx[bad]] = i
                keep = ~bad
                x, c, r, idx = x[keep], c[keep], r[keep], idx[keep]
                if idx.size == 0:
                    break
    return vstep


def pair_violation_steps(system: ControlSystem, x0s, cand, r0, values, step: float, tau: float,
                         dt: float, zeta: KLFunction, eps: float, additive: float,
                         target: Optional[Box] = None, reference=None, jobs: int = 1) -> np.ndarray:
    """First sample index at which each (initial state, candidate) pair violates
    ``measure <= zeta(r0 + eps, t) + additive``; ``N + 1`` if it never does.

    ``measure`` is ``d(x, target)`` or, when ``reference`` trajectories are
    given, ``||x - reference[cand, t]||``.
    """
    nsteps = _ratio(tau, dt, "tau", "dt")
    sub = _ratio(step, dt, "control step", "dt")
    if values.shape[1] * sub < nsteps:
        raise ValueError("candidate signals shorter than the horizon")
    x0s = np.asarray(x0s, dtype=float)
    n_chunks = max(1, -(-x0s.shape[0] // CHUNK_PAIRS))
    parts = map_chunks(
        _pair_chunk, n_chunks,
        (system, x0s, np.asarray(cand), np.asarray(r0, dtype=float), values, sub, nsteps, dt,
         zeta, eps, additive, target, reference),
        jobs=jobs,
    )
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def coverage_steps(system: ControlSystem, gamma_grid, pool: CandidatePool, zeta: KLFunction,
                   mode: SpanningMode, target: Box, tau: float, dt: float, jobs: int = 1) -> np.ndarray:
    """``(n_candidates, n_points)`` array of first violating sample indices."""
    grid = np.atleast_2d(np.asarray(gamma_grid, dtype=float))
    nc, npnt = len(pool), grid.shape[0]
    cand = np.repeat(np.arange(nc), npnt)
    x0s = np.tile(grid, (nc, 1))
    r0 = np.tile(target.distance(grid), nc)
    steps = pair_violation_steps(system, x0s, cand, r0, pool.values, pool.step, tau, dt, zeta,
                                 mode.eps, mode.additive, target=target, jobs=jobs)
    return steps.reshape(nc, npnt)


def minimal_cover(system: ControlSystem, gamma_grid, candidates: CandidatePool, zeta: KLFunction,
                  mode: SpanningMode, target: Box, tau: float, dt: float, method: str = "auto",
                  jobs: int = 1) -> SpanningResult:
    if len(candidates) == 0:
        raise ValueError("candidate pool is empty")
    steps = coverage_steps(system, gamma_grid, candidates, zeta, mode, target, tau, dt, jobs)
    n_tau = _ratio(tau, dt, "tau", "dt")
    return cover_from_steps(steps, n_tau, tau, method)


def cover_from_steps(steps: np.ndarray, n_tau: int, tau: float, method: str = "auto") -> SpanningResult:
    C = steps > n_tau
    try:
        chosen, used = solve_cover(C, method)
    except InfeasibleCoverError as err:
        raise err.with_horizon(tau) from None
    return SpanningResult(float(tau), len(chosen), assignment(C, chosen), used, list(chosen))


def fit_rate(horizons: Sequence[float], counts: Sequence[int]) -> tuple[float, float]:
    """Least-squares slope of ``log count`` over the upper half of the horizons,
    and the single-point value ``log(count_max) / tau_max``."""
    t = np.asarray(horizons, dtype=float)
    logc = np.log(np.asarray(counts, dtype=float))
    k = len(t) // 2
    slope = float(np.polyfit(t[k:], logc[k:], 1)[0])
    if abs(slope) < 1e-12:
        slope = 0.0
    return slope, float(logc[-1] / t[-1])


def entropy_rate(system: ControlSystem, gamma_grid, candidate_builder: Union[Callable, CandidatePool],
                 zeta: KLFunction, mode: SpanningMode, target: Box, horizons: Sequence[float],
                 dt: float, method: str = "auto", jobs: int = 1) -> EntropyEstimate:
    """Spanning counts for each horizon and the fitted exponential growth rate.

    ``candidate_builder`` is a pool (covering the largest horizon) or a callable
    ``tau -> CandidatePool``.  Shorter horizons reuse prefixes of the same
    signals, so counts are nondecreasing in ``tau``.
    """
    hs = [float(h) for h in horizons]
    if len(hs) < 3 or any(b <= a for a, b in zip(hs, hs[1:])):
        raise ValueError("horizons must be increasing with at least 3 entries")
    pool = candidate_builder if isinstance(candidate_builder, CandidatePool) else candidate_builder(hs[-1])
    grid = np.atleast_2d(np.asarray(gamma_grid, dtype=float))
    steps = coverage_steps(system, grid, pool, zeta, mode, target, hs[-1], dt, jobs)
    counts, methods, sat = [], [], []
    for h in hs:
        res = cover_from_steps(steps, _ratio(h, dt, "horizon", "dt"), h, method)
        counts.append(res.count)
        methods.append(res.method)
        sat.append(res.count >= min(grid.shape[0], len(pool)))
    rate, rate_max = fit_rate(hs, counts)
    return EntropyEstimate(hs, counts, rate, rate_max, methods, sat, grid.shape[0], len(pool))


def synthetic_estimate(horizons: Sequence[float], counts: Sequence[int]) -> EntropyEstimate:
    rate, rate_max = fit_rate(horizons, counts)
    return EntropyEstimate(list(horizons), list(counts), rate, rate_max,
                           ["given"] * len(counts), [False] * len(counts))
