"""Experiment configuration: TOML files mapped onto nested dataclasses.

Layout (all sections except ``system`` and ``gamma`` are optional)::

    config_version = 1
    name = "linear-1d"
    seed = 0

    [system]            # kind = linear | quadratic | cubic | chain
    kind = "linear"
    A = [[0.1]]
    B = [[1.0]]
    rho = 2.0           # control range [-rho, rho]^m (synthesis picks its own)

    [system.params]     # model parameters for quadratic / cubic / chain

    [gamma]             # initial box and grid points per axis
    lower = [-0.5]
    upper = [0.5]
    points = [801]

    [target]            # defaults to the origin
    [zeta]              # alpha, M; or synthesized = true
    [feedback]          # kind = linear (K or poles) | synthesized | none
    [spanning]          # epsilon, mode, horizons, dt, control_step, ...
    [bounds]
    [synthesis]
    [verify]
    [sweep]
    [simulate]
    [comparison]        # fb-entropy / check42 overrides
"""
from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _finite(name, v):
    if isinstance(v, (list, tuple)):
        for i, x in enumerate(v):
            _finite(f"{name}[{i}]", x)
        return
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{name}: must be finite")


def _positive(name, v):
    _finite(name, v)
    if not v > 0:
        raise ConfigError(f"{name}: must be positive")


@dataclass
class SystemConfig:
    kind: str = "linear"
    A: Optional[list] = None
    B: Optional[list] = None
    rho: float = 1.0
    params: dict = field(default_factory=dict)

    def validate(self):
        if self.kind not in ("linear", "quadratic", "cubic", "chain"):
            raise ConfigError(f"system.kind: unknown kind {self.kind!r}")
        _positive("system.rho", self.rho)
        if self.kind == "linear":
            if self.A is None or self.B is None:
                raise ConfigError("system.A and system.B are required for linear systems")
            _finite("system.A", [x for row in self.A for x in row])
            _finite("system.B", [x for row in self.B for x in row])
        for k, v in self.params.items():
            _finite(f"system.params.{k}", v)


@dataclass
class BoxConfig:
    lower: list = field(default_factory=lambda: [0.0])
    upper: list = field(default_factory=lambda: [0.0])
    points: Any = 1

    def validate(self, name):
        _finite(f"{name}.lower", self.lower)
        _finite(f"{name}.upper", self.upper)
        if len(self.lower) != len(self.upper):
            raise ConfigError(f"{name}: lower and upper differ in length")
        if any(a > b for a, b in zip(self.lower, self.upper)):
            raise ConfigError(f"{name}: lower exceeds upper")
        pts = self.points if isinstance(self.points, list) else [self.points]
        for p in pts:
            if not isinstance(p, int) or p < 1:
                raise ConfigError(f"{name}.points: must be positive integers")


@dataclass
class ZetaConfig:
    alpha: float = 0.5
    M: float = 1.0
    synthesized: bool = False

    def validate(self):
        _positive("zeta.alpha", self.alpha)
        _finite("zeta.M", self.M)
        if self.M < 1:
            raise ConfigError("zeta.M: must be at least 1")


@dataclass
class FeedbackConfig:
    kind: str = "none"
    K: Optional[list] = None
    poles: Optional[list] = None

    def validate(self):
        if self.kind not in ("none", "linear", "synthesized"):
            raise ConfigError(f"feedback.kind: unknown kind {self.kind!r}")
        if self.kind == "linear" and self.K is None and self.poles is None:
            raise ConfigError("feedback.K or feedback.poles is required for linear feedback")


@dataclass
class SpanningConfig:
    epsilon: float = 0.1
    mode: str = "practical"
    horizons: list = field(default_factory=lambda: [1.0, 2.0, 3.0])
    dt: float = 0.01
    control_step: Optional[float] = None
    constant_levels: int = 0
    sampling_factor: float = 1.0
    cover: str = "auto"
    sample_hold: bool = True

    def validate(self):
        _positive("spanning.epsilon", self.epsilon)
        _positive("spanning.dt", self.dt)
        _positive("spanning.sampling_factor", self.sampling_factor)
        if self.control_step is not None:
            _positive("spanning.control_step", self.control_step)
        if self.mode not in ("strict", "practical"):
            raise ConfigError("spanning.mode: must be 'strict' or 'practical'")
        if self.cover not in ("auto", "exact", "greedy", "interval"):
            raise ConfigError("spanning.cover: must be auto, exact, greedy or interval")
        _finite("spanning.horizons", self.horizons)
        if len(self.horizons) < 3 or any(b <= a for a, b in zip(self.horizons, self.horizons[1:])):
            raise ConfigError("spanning.horizons: need at least 3 increasing values")
        if self.horizons[0] <= 0:
            raise ConfigError("spanning.horizons: must be positive")
        if not isinstance(self.constant_levels, int) or self.constant_levels < 0:
            raise ConfigError("spanning.constant_levels: must be a nonnegative integer")


@dataclass
class BoundsConfig:
    grid_res: int = 21
    upper_safety: float = 1.05
    lower_safety: float = 1.0

    def validate(self):
        if not isinstance(self.grid_res, int) or self.grid_res < 2:
            raise ConfigError("bounds.grid_res: must be an integer >= 2")
        _finite("bounds.upper_safety", self.upper_safety)
        _finite("bounds.lower_safety", self.lower_safety)
        if self.upper_safety < 1 or self.lower_safety < 1:
            raise ConfigError("bounds safety factors must be at least 1")


@dataclass
class SynthesisConfig:
    alpha: float = 0.5
    T_fit: float = 20.0
    dt: float = 1e-3
    grid_points: int = 101

    def validate(self):
        _positive("synthesis.alpha", self.alpha)
        _positive("synthesis.T_fit", self.T_fit)
        _positive("synthesis.dt", self.dt)


@dataclass
class VerifyConfig:
    T: float = 20.0
    dt: Optional[float] = None

    def validate(self):
        _positive("verify.T", self.T)
        if self.dt is not None:
            _positive("verify.dt", self.dt)


@dataclass
class SweepConfig:
    start: float = 1e2
    stop: float = 1e6
    num: int = 20

    def validate(self):
        _positive("sweep.start", self.start)
        _positive("sweep.stop", self.stop)
        if not isinstance(self.num, int) or self.num < 2:
            raise ConfigError("sweep.num: must be an integer >= 2")


@dataclass
class SimulateConfig:
    x0: Optional[list] = None
    u: Optional[list] = None
    tau: float = 10.0
    dt: float = 0.01

    def validate(self):
        _positive("simulate.tau", self.tau)
        _positive("simulate.dt", self.dt)


@dataclass
class ComparisonConfig:
    """Overrides for ``fb-entropy`` and ``check42``; unset fields fall back to the main sections."""

    alpha: Optional[float] = None
    horizons: Optional[list] = None
    points: Any = None
    slack: float = 0.10

    def validate(self):
        if self.alpha is not None:
            _positive("comparison.alpha", self.alpha)
        if self.horizons is not None:
            _finite("comparison.horizons", self.horizons)
            if len(self.horizons) < 3 or any(b <= a for a, b in zip(self.horizons, self.horizons[1:])):
                raise ConfigError("comparison.horizons: need at least 3 increasing values")
        _finite("comparison.slack", self.slack)
        if self.slack < 0:
            raise ConfigError("comparison.slack: must be nonnegative")


@dataclass
class ExperimentConfig:
    system: SystemConfig
    gamma: BoxConfig
    name: str = "experiment"
    config_version: int = CONFIG_VERSION
    seed: int = 0
    target: BoxConfig = field(default_factory=BoxConfig)
    zeta: ZetaConfig = field(default_factory=ZetaConfig)
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig)
    spanning: SpanningConfig = field(default_factory=SpanningConfig)
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    comparison: ComparisonConfig = field(default_factory=ComparisonConfig)

    def validate(self) -> "ExperimentConfig":
        if self.config_version != CONFIG_VERSION:
            raise ConfigError(f"config_version: expected {CONFIG_VERSION}, got {self.config_version}")
        self.system.validate()
        self.gamma.validate("gamma")
        self.target.validate("target")
        self.zeta.validate()
        self.feedback.validate()
        self.spanning.validate()
        self.bounds.validate()
        self.synthesis.validate()
        self.verify.validate()
        self.sweep.validate()
        self.simulate.validate()
        self.comparison.validate()
        if not isinstance(self.seed, int):
            raise ConfigError("seed: must be an integer")
        if self.zeta.synthesized and self.system.kind == "linear":
            raise ConfigError("zeta.synthesized: only available for quadratic, cubic and chain systems")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "system": SystemConfig, "gamma": BoxConfig, "target": BoxConfig, "zeta": ZetaConfig,
    "feedback": FeedbackConfig, "spanning": SpanningConfig, "bounds": BoundsConfig,
    "synthesis": SynthesisConfig, "verify": VerifyConfig, "sweep": SweepConfig,
    "simulate": SimulateConfig, "comparison": ComparisonConfig,
}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a table")
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"{where}.{sorted(extra)[0]}: unknown field")
    try:
        return cls(**data)
    except TypeError as err:
        raise ConfigError(f"{where}: {err}") from None


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    for key in ("system", "gamma"):
        if key not in data:
            raise ConfigError(f"{key}: section is required")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            kwargs[key] = _build(_SECTIONS[key], value, key)
        elif key in ("name", "config_version", "seed"):
            kwargs[key] = value
        else:
            raise ConfigError(f"{key}: unknown field")
    if "target" not in kwargs:
        d = len(kwargs["gamma"].lower)
        kwargs["target"] = BoxConfig([0.0] * d, [0.0] * d, 1)
    return ExperimentConfig(**kwargs).validate()


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"{path}: {err}") from None
    return config_from_dict(data)


def loads_config(text: str) -> ExperimentConfig:
    return config_from_dict(tomllib.loads(text))
