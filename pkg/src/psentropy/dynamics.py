"""Control systems, control signals, KL envelopes and fixed-step RK4 integration.

All state-space quantities use the max-norm: distances to boxes, balls and the
induced matrix norm (maximum absolute row sum).

Vector fields are evaluated in batches: ``field(x, u)`` takes ``x`` of shape
``(n, d)`` and ``u`` of shape ``(n, m)`` and returns ``(n, d)``; ``jacobian``
returns ``(n, d, d)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np

BLOWUP_THRESHOLD = 1e12


class DivergenceError(RuntimeError):
    """A trajectory left the finite region (|x_i| > 1e12 or non-finite)."""

    def __init__(self, time: float, state=None):
        self.time = float(time)
        self.state = state
        super().__init__(f"trajectory diverged at t={self.time:.6g}")


class RangeViolationError(ValueError):
    """A feedback produced a control value outside the admissible range."""

    def __init__(self, time: float, value):
        self.time = float(time)
        self.value = np.asarray(value)
        super().__init__(
            f"feedback value {np.array2string(self.value, precision=6)} "
            f"outside control range at t={self.time:.6g}"
        )


# ---------------------------------------------------------------------------
# sets

@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lower, upper]``; a point when ``lower == upper``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-d arrays of equal length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("box bounds must not be NaN")
        if np.any(lo > hi):
            raise ValueError(f"empty box: lower {lo} > upper {hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def point(cls, x) -> "Box":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(x, x)

    @classmethod
    def ball(cls, center, radius: float) -> "Box":
        c = np.atleast_1d(np.asarray(center, dtype=float))
        return cls(c - radius, c + radius)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def sides(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def is_point(self) -> bool:
        return bool(np.all(self.lower == self.upper))

    @property
    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower - tol) & (x <= self.upper + tol), axis=-1)

    def distance(self, x) -> np.ndarray:
        """Max-norm distance from ``x`` (shape ``(..., d)``) to the box."""
        x = np.asarray(x, dtype=float)
        gap = np.maximum(self.lower - x, x - self.upper)
        return np.max(np.maximum(gap, 0.0), axis=-1)

    def inflate(self, radius: float) -> "Box":
        """The closed max-norm ``radius``-neighbourhood of the box."""
        return Box(self.lower - radius, self.upper + radius)

    def clip(self, lo, hi) -> "Box":
        return Box(np.maximum(self.lower, lo), np.minimum(self.upper, hi))

    def grid(self, points) -> np.ndarray:
        """Tensor grid with ``points`` per axis (int or sequence); shape ``(N, d)``.

        Degenerate axes always get a single point.
        """
        pts = np.broadcast_to(np.asarray(points, dtype=int), (self.dim,))
        if not self.is_bounded:
            raise ValueError("cannot grid an unbounded box")
        axes = []
        for lo, hi, n in zip(self.lower, self.upper, pts):
            if lo == hi or n <= 1:
                axes.append(np.array([0.5 * (lo + hi)]) if lo != hi else np.array([lo]))
            else:
                axes.append(np.linspace(lo, hi, int(n)))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def grid_spacing(self, h: float) -> np.ndarray:
        """Grid with spacing at most ``h`` along every non-degenerate axis."""
        n = np.where(self.sides > 0, np.ceil(self.sides / h).astype(int) + 1, 1)
        return self.grid(n)

    def far_distance(self, target: "Box") -> float:
        """``max_{y in self} d(y, target)`` in the max-norm (exact for boxes)."""
        below = target.lower - self.lower
        above = self.upper - target.upper
        return float(max(0.0, np.max(np.maximum(below, above))))

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


# target and initial sets are both boxes
TargetSet = Box
InitialSet = Box


def truncate_range(lower, upper, rho: float) -> Box:
    """Compact control range ``U ∩ [-rho, rho]^m`` for a possibly unbounded box."""
    lo = np.atleast_1d(np.asarray(lower, dtype=float))
    hi = np.atleast_1d(np.asarray(upper, dtype=float))
    if rho is None or not np.isfinite(rho) or rho <= 0:
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("an unbounded control range needs a positive truncation radius")
        return Box(lo, hi)
    return Box(np.clip(lo, -rho, rho), np.clip(hi, -rho, rho))


# ---------------------------------------------------------------------------
# systems

@dataclass(frozen=True)
class ControlSystem:
    """``x' = f(x, u)``, ``u`` in a compact box ``control_range``.

    ``poly`` optionally holds the coefficient matrix ``c[i, j]`` of a scalar
    polynomial field ``f(x, u) = sum c[i, j] x**i u**j``; it enables the
    compiled closed-loop path in :mod:`psentropy.fastloop`.

    ``field`` is expected to be locally Lipschitz in ``x`` uniformly in ``u``
    on the visited region; this is an input contract and is not verified.
    """

    dim_state: int
    dim_control: int
    field: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray, np.ndarray], np.ndarray]
    control_range: Box
    name: str = "system"
    poly: Optional[np.ndarray] = dc_field(default=None, compare=False, repr=False)
    matrices: Optional[tuple] = dc_field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.dim_state < 1 or self.dim_control < 1:
            raise ValueError("dimensions must be positive")
        if self.control_range.dim != self.dim_control:
            raise ValueError("control range dimension does not match dim_control")
        if not self.control_range.is_bounded:
            raise ValueError("control range must be truncated to a compact box")

    def f(self, x, u) -> np.ndarray:
        """Single-point evaluation."""
        x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, self.dim_state)
        u = np.atleast_1d(np.asarray(u, dtype=float)).reshape(1, self.dim_control)
        return self.field(x, u)[0]

    def fx(self, x, u) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, self.dim_state)
        u = np.atleast_1d(np.asarray(u, dtype=float)).reshape(1, self.dim_control)
        return self.jacobian(x, u)[0]

    def with_control_range(self, control_range: Box) -> "ControlSystem":
        return ControlSystem(
            self.dim_state, self.dim_control, self.field, self.jacobian,
            control_range, self.name, self.poly, self.matrices,
        )

    @property
    def is_linear(self) -> bool:
        return self.matrices is not None


def linear_system(a_matrix, b_matrix, control_range: Box, name: str = "linear") -> ControlSystem:
    A = np.atleast_2d(np.asarray(a_matrix, dtype=float))
    B = np.atleast_2d(np.asarray(b_matrix, dtype=float))
    d, m = B.shape
    if A.shape != (d, d):
        raise ValueError("A must be d x d and B d x m")

    def field(x, u):
        return x @ A.T + u @ B.T

    def jacobian(x, u):
        return np.broadcast_to(A, (x.shape[0], d, d)).copy()

    return ControlSystem(d, m, field, jacobian, control_range, name, matrices=(A, B))


def polynomial_system(coeffs, control_range: Box, name: str = "polynomial") -> ControlSystem:
    """Scalar system ``x' = sum_{i,j} c[i, j] x^i u^j``."""
    c = np.asarray(coeffs, dtype=float)
    if c.ndim != 2:
        raise ValueError("coefficients must be a 2-d array c[i, j]")
    dc = np.polynomial.polynomial.polyder(c, axis=0) if c.shape[0] > 1 else np.zeros((1, c.shape[1]))

    def field(x, u):
        return np.polynomial.polynomial.polyval2d(x, u, c)

    def jacobian(x, u):
        return np.polynomial.polynomial.polyval2d(x, u, dc)[:, :, None]

    return ControlSystem(1, 1, field, jacobian, control_range, name, poly=c)


# ---------------------------------------------------------------------------
# KL envelopes

class KLFunction:
    """Comparison function ``zeta(r, s)``: increasing in ``r``, decreasing in ``s``."""

    def __call__(self, r, s):
        raise NotImplementedError

    def scaled(self, factor: float) -> "KLFunction":
        return ScaledKL(self, factor)


@dataclass(frozen=True)
class ExponentialKL(KLFunction):
    alpha: float
    big_m: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.big_m >= 1:
            raise ValueError("M must be at least 1")

    def __call__(self, r, s):
        return np.exp(-self.alpha * np.asarray(s, dtype=float)) * self.big_m * np.asarray(r, dtype=float)

    def scaled(self, factor: float) -> "ExponentialKL":
        return ExponentialKL(self.alpha, self.big_m * factor)

    def to_dict(self) -> dict:
        return {"kind": "exponential", "alpha": self.alpha, "M": self.big_m}


@dataclass(frozen=True)
class ScaledKL(KLFunction):
    base: KLFunction
    factor: float

    def __call__(self, r, s):
        return self.factor * self.base(r, s)

    def to_dict(self) -> dict:
        return {"kind": "scaled", "factor": self.factor, "base": self.base.to_dict()}


class TabulatedKL(KLFunction):
    """Bilinear interpolation of a table ``values[i, j] = zeta(r[i], s[j])``.

    The table must have ``r[0] == 0`` with a zero row, be strictly increasing
    along ``r`` and strictly decreasing along ``s``; bilinear interpolation
    keeps both monotonicities.  Queries outside the table raise.
    """

    def __init__(self, r_grid, s_grid, values):
        self.r = np.asarray(r_grid, dtype=float)
        self.s = np.asarray(s_grid, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (self.r.size, self.s.size):
            raise ValueError("table shape must be (len(r), len(s))")
        if self.r[0] != 0 or np.any(self.values[0] != 0):
            raise ValueError("table must start at r = 0 with zeta(0, s) = 0")
        if np.any(np.diff(self.r) <= 0) or np.any(np.diff(self.s) <= 0):
            raise ValueError("grids must be strictly increasing")
        if np.any(np.diff(self.values, axis=0) <= 0):
            raise ValueError("table must be strictly increasing in r")
        if np.any(np.diff(self.values[1:], axis=1) >= 0):
            raise ValueError("table must be strictly decreasing in s for r > 0")

    def __call__(self, r, s):
        r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
        if np.any(r < 0) or np.any(r > self.r[-1]) or np.any(s < self.s[0]) or np.any(s > self.s[-1]):
            raise ValueError("query outside the tabulated range")
        i = np.clip(np.searchsorted(self.r, r, side="right") - 1, 0, self.r.size - 2)
        j = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, self.s.size - 2)
        wr = (r - self.r[i]) / (self.r[i + 1] - self.r[i])
        ws = (s - self.s[j]) / (self.s[j + 1] - self.s[j])
        v = self.values
        return ((1 - wr) * (1 - ws) * v[i, j] + wr * (1 - ws) * v[i + 1, j]
                + (1 - wr) * ws * v[i, j + 1] + wr * ws * v[i + 1, j + 1])

    def to_dict(self) -> dict:
        return {"kind": "tabulated", "r": self.r.tolist(), "s": self.s.tolist(),
                "values": self.values.tolist()}


def kl_eval(zeta: KLFunction, r: float, s: float) -> float:
    if r < 0 or s < 0:
        raise ValueError("r and s must be nonnegative")
    return float(zeta(r, s))


# ---------------------------------------------------------------------------
# signals and trajectories

@dataclass(frozen=True)
class ControlSignal:
    """Piecewise-constant control: ``values[k]`` on ``[k*step, (k+1)*step)``."""

    step: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise ValueError("values must have shape (L, m)")
        if not self.step > 0:
            raise ValueError("step must be positive")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, value, step: float, horizon: float) -> "ControlSignal":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        n = _ratio(horizon, step, "horizon", "step")
        return cls(step, np.tile(value, (n, 1)))

    @property
    def horizon(self) -> float:
        return self.step * len(self.values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def within(self, box: Box, tol: float = 1e-12) -> bool:
        return bool(np.all(box.contains(self.values, tol)))


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    control: Optional[ControlSignal]
    origin: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _ratio(a: float, b: float, na: str, nb: str) -> int:
    """Integer ``a / b``; raises unless ``b`` divides ``a``."""
    if b <= 0:
        raise ValueError(f"{nb} must be positive")
    n = int(round(a / b))
    if n < 0 or abs(n * b - a) > 1e-9 * max(abs(a), b):
        raise ValueError(f"{nb}={b} does not divide {na}={a}")
    return n


def _check_finite(x: np.ndarray, t: float):
    bad = ~np.isfinite(x) | (np.abs(x) > BLOWUP_THRESHOLD)
    if np.any(bad):
        row = np.nonzero(np.any(bad.reshape(x.shape[0], -1), axis=1))[0][0]
        raise DivergenceError(t, x[row])


def rk4_step(field, x, u, dt):
    k1 = field(x, u)
    k2 = field(x + 0.5 * dt * k1, u)
    k3 = field(x + 0.5 * dt * k2, u)
    k4 = field(x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_batch(system: ControlSystem, x0s, values, step: float, tau: float, dt: float,
                    record: bool = True):
    """RK4 for ``n`` initial states, each with its own piecewise-constant control.

    ``values`` has shape ``(n, L, m)`` (or ``(L, m)`` shared by all).  Returns
    states of shape ``(n, N+1, d)`` (or only the final states if ``record`` is
    false).
    """
    x = np.array(np.atleast_2d(x0s), dtype=float)
    n = x.shape[0]
    nsteps = _ratio(tau, dt, "tau", "dt")
    sub = _ratio(step, dt, "control step", "dt")
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 2:
        vals = np.broadcast_to(vals, (n,) + vals.shape)
    if nsteps > 0 and vals.shape[1] * sub < nsteps:
        raise ValueError("control signal shorter than the horizon")
    _check_finite(x, 0.0)
    out = np.empty((n, nsteps + 1, system.dim_state)) if record else None
    if record:
        out[:, 0] = x
    for i in range(nsteps):
        u = vals[:, i // sub]
        x = rk4_step(system.field, x, u, dt)
        _check_finite(x, (i + 1) * dt)
        if record:
            out[:, i + 1] = x
    return out if record else x


def integrate(system: ControlSystem, x0, u: ControlSignal, tau: float, dt: float) -> Trajectory:
    """Fixed-step classical RK4 solution ``phi(t, x0, u)`` sampled every ``dt``."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    nsteps = _ratio(tau, dt, "tau", "dt")
    if nsteps == 0:
        return Trajectory(np.zeros(1), x0[None].copy(), u, x0)
    states = integrate_batch(system, x0[None], u.values[None], u.step, tau, dt)[0]
    return Trajectory(dt * np.arange(nsteps + 1), states, u, x0)


def _check_range(system: ControlSystem, u: np.ndarray, t: float, rho: Optional[float]):
    ok = system.control_range.contains(u, tol=1e-12)
    if rho is not None:
        ok &= np.all(np.abs(u) <= rho * (1 + 1e-12), axis=-1)
    if not np.all(ok):
        raise RangeViolationError(t, u[np.nonzero(~ok)[0][0]])


def closed_loop_batch(system: ControlSystem, feedback, x0s, tau: float, dt: float,
                      control_step: Optional[float] = None, sample_hold: bool = False):
    """Closed loop ``x' = f(x, k(x))`` for many seeds.

    Returns ``(states, controls)`` with ``states`` of shape ``(n, N+1, d)`` and
    the sampled open-loop signals ``u(t) = k(psi(t))`` of shape ``(n, L, m)``.
    With ``sample_hold`` the loop itself is sampled-data (``u`` held between
    control samples), so replaying ``controls`` open loop reproduces ``states``.
    """
    step = dt if control_step is None else control_step
    sub = _ratio(step, dt, "control step", "dt")
    nsteps = _ratio(tau, dt, "tau", "dt")
    nctrl = _ratio(tau, step, "tau", "control step")
    rho = getattr(feedback, "rho", None)
    x = np.array(np.atleast_2d(x0s), dtype=float)
    n = x.shape[0]
    _check_finite(x, 0.0)

    def cl_field(xx, _u):
        return system.field(xx, feedback(xx))

    states = np.empty((n, nsteps + 1, system.dim_state))
    controls = np.empty((n, nctrl, system.dim_control))
    states[:, 0] = x
    for i in range(nsteps):
        if i % sub == 0:
            u = feedback(x)
            _check_range(system, u, i * dt, rho)
            controls[:, i // sub] = u
        x = rk4_step(system.field, x, u, dt) if sample_hold else rk4_step(cl_field, x, None, dt)
        _check_finite(x, (i + 1) * dt)
        states[:, i + 1] = x
    if nsteps:
        _check_range(system, feedback(x), nsteps * dt, rho)
    return states, controls


def closed_loop(system: ControlSystem, feedback, x0, tau: float, dt: float,
                control_step: Optional[float] = None):
    """Closed-loop trajectory ``psi(t, x0; k)`` and its recorded control ``u_{x0}``."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    step = dt if control_step is None else control_step
    states, controls = closed_loop_batch(system, feedback, x0[None], tau, dt, step)
    u = ControlSignal(step, controls[0]) if controls.shape[1] else ControlSignal(step, np.zeros((0, system.dim_control)))
    return Trajectory(dt * np.arange(states.shape[1]), states[0], u, x0), u


# ---------------------------------------------------------------------------
# pointwise quantities

def dist_to_target(x, target: Box) -> float:
    return float(target.distance(np.atleast_1d(np.asarray(x, dtype=float))))


def divergence(system: ControlSystem, x, u) -> float:
    return float(np.trace(system.fx(x, u)))


def matrix_norm_max(J: np.ndarray) -> np.ndarray:
    """Operator norm induced by the max-norm (max absolute row sum), batched."""
    return np.max(np.sum(np.abs(J), axis=-1), axis=-1)


def jacobian_norm(system: ControlSystem, x, u) -> float:
    return float(matrix_norm_max(system.fx(x, u)))


def finite_difference_jacobian(system: ControlSystem, x, u, h: float = 1e-6) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.size
    cols = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = h * max(1.0, abs(x[i]))
        cols.append((system.f(x + e, u) - system.f(x - e, u)) / (2 * e[i]))
    return np.stack(cols, axis=-1)


def jacobian_error(system: ControlSystem, state_box: Box, n_samples: int = 50,
                   seed: int = 0) -> float:
    """Largest relative deviation between ``jacobian`` and central differences."""
    rng = np.random.default_rng(seed)
    U = system.control_range
    worst = 0.0
    for _ in range(n_samples):
        x = rng.uniform(state_box.lower, state_box.upper)
        u = rng.uniform(U.lower, U.upper)
        J = system.fx(x, u)
        Jfd = finite_difference_jacobian(system, x, u)
        scale = max(1.0, float(np.max(np.abs(J))))
        worst = max(worst, float(np.max(np.abs(J - Jfd))) / scale)
    return worst


def grid_points(box: Box, points: Sequence[int] | int) -> np.ndarray:
    return box.grid(points)
