"""Numerical estimates of practical stabilization entropy.

Spanning sets of open-loop controls are built over a gridded initial set,
their minimal cardinalities are fitted to an exponential growth rate, and the
rates are compared with closed-form bounds and feedback constructions.
"""
from .dynamics import (
    Box,
    ControlSignal,
    ControlSystem,
    DivergenceError,
    ExponentialKL,
    RangeViolationError,
    TabulatedKL,
    Trajectory,
    closed_loop,
    integrate,
    linear_system,
    polynomial_system,
)
from .spanning import EntropyEstimate, SpanningMode, SpanningResult, entropy_rate, minimal_cover

__version__ = "0.1.0"

__all__ = [
    "Box",
    "ControlSignal",
    "ControlSystem",
    "DivergenceError",
    "EntropyEstimate",
    "ExponentialKL",
    "RangeViolationError",
    "SpanningMode",
    "SpanningResult",
    "TabulatedKL",
    "Trajectory",
    "closed_loop",
    "entropy_rate",
    "integrate",
    "linear_system",
    "minimal_cover",
    "polynomial_system",
]
