"""Scenario configuration: one flat JSON document per run.

Every key mirrors a :class:`ScenarioConfig` field.  Matrices may be given as
a full nested list or as a list of diagonal entries.  ``Pf: null`` means the
terminal weight is computed from the Riccati equation.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from ..control_model import build_continuous_model, discretize_zoh
from ..dynamics import InertiaParams, PlantState
from ..fixed_point import FixedFormat
from ..gpd import SolverConfig
from ..mpc import ConstraintSpec, MpcConfig, terminal_weight_dare

__all__ = ["ScenarioConfig", "Reference", "load_config", "save_config"]

SINUSOID_AMPLITUDE = (0.1, 0.05, 0.08)
SINUSOID_FREQUENCY = (0.01, 0.02, 0.015)
REST_TO_REST_TARGET = (0.08, -0.03, -0.1)


@dataclass(frozen=True)
class Reference:
    """Attitude reference program: constant, step, or per-axis sinusoid."""

    kind: str = "constant"
    value: tuple = (0.0, 0.0, 0.0)
    initial: tuple = (0.0, 0.0, 0.0)
    step_time: float = 0.0
    amplitude: tuple = (0.0, 0.0, 0.0)
    frequency: tuple = (0.0, 0.0, 0.0)
    phase: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("constant", "step", "sinusoid"):
            raise ValueError(f"unknown reference kind {self.kind!r}")
        for name in ("value", "initial", "amplitude", "frequency", "phase"):
            v = tuple(float(a) for a in getattr(self, name))
            if len(v) != 3:
                raise ValueError(f"reference field {name} needs 3 entries")
            object.__setattr__(self, name, v)

    def __call__(self, t: float) -> np.ndarray:
        if self.kind == "constant":
            return np.array(self.value)
        if self.kind == "step":
            return np.array(self.value if t >= self.step_time else self.initial)
        return np.asarray(self.amplitude) * np.sin(2 * np.pi * np.asarray(self.frequency) * t + np.asarray(self.phase))

    @classmethod
    def sinusoid(cls, amplitude=SINUSOID_AMPLITUDE, frequency=SINUSOID_FREQUENCY, phase=(0.0, 0.0, 0.0)):
        return cls(kind="sinusoid", amplitude=amplitude, frequency=frequency, phase=phase)

    @classmethod
    def step(cls, value, initial=(0.0, 0.0, 0.0), step_time=0.0):
        return cls(kind="step", value=value, initial=initial, step_time=step_time)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "constant":
            d["value"] = list(self.value)
        elif self.kind == "step":
            d.update(value=list(self.value), initial=list(self.initial), step_time=self.step_time)
        else:
            d.update(amplitude=list(self.amplitude), frequency=list(self.frequency), phase=list(self.phase))
        return d


def _matrix(v, dim):
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(dim)
    if a.ndim == 1:
        return np.diag(np.broadcast_to(a, (dim,)))
    return a


def _listify(M: np.ndarray):
    M = np.asarray(M)
    if np.count_nonzero(M - np.diag(np.diag(M))) == 0:
        return np.diag(M).tolist()
    return M.tolist()


@dataclass(frozen=True)
class ScenarioConfig:
    # plant
    J: tuple = (3000.0, 1500.0, 2000.0)
    Jw: tuple = (50.0, 50.0, 50.0)
    initial_attitude: tuple = (0.0, 0.0, 0.0)
    initial_omega: tuple = (0.0, 0.0, 0.0)
    initial_wheel_speed: tuple = (0.0, 0.0, 0.0)
    disturbance: tuple = (0.0, 0.0, 0.0)
    dt: float = 0.01
    # controller
    Ts: float = 0.5
    N: int = 10
    Nc: int = 2
    Q1: Any = (100.0, 100.0, 100.0, 0.1, 0.1, 0.1)
    Q2: Any = 50.0
    R: Any = 0.01
    Pf: Any = None
    virtual: bool = True
    u_max: Any = 1.0
    du_max: Any = None
    attitude_max: Any = None
    wheel_max: Any = 10.0
    governor: bool = True
    windup_limit: float = 0.5
    integral_gain: float = 0.1
    # solver
    word_bits: Optional[int] = None
    frac_bits: int = 16
    eps_V: float = 1e-6
    eps_g: float = 1e-6
    max_iters: int = 2000
    warm_start: bool = True
    abort_on_overflow: bool = True
    # run
    reference: Reference = field(default_factory=Reference)
    duration: float = 60.0

    def __post_init__(self):
        if isinstance(self.reference, dict):
            object.__setattr__(self, "reference", Reference(**self.reference))
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.dt <= 0 or self.Ts <= 0:
            raise ValueError("dt and Ts must be positive")
        ratio = self.Ts / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValueError(f"dt={self.dt} does not divide Ts={self.Ts}")

    # -- derived objects -------------------------------------------------
    @property
    def substeps(self) -> int:
        return int(round(self.Ts / self.dt))

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.Ts))

    def inertia(self) -> InertiaParams:
        return InertiaParams(J=self.J, Jw=self.Jw)

    def initial_state(self) -> PlantState:
        return PlantState(*self.initial_attitude, omega=self.initial_omega, wheel_speed=self.initial_wheel_speed)

    def fixed_format(self) -> Optional[FixedFormat]:
        if self.word_bits is None:
            return None
        return FixedFormat.q(int(self.word_bits), int(self.frac_bits))

    def model(self):
        return discretize_zoh(build_continuous_model(self.inertia()), self.Ts)

    def mpc_config(self) -> MpcConfig:
        model = self.model()
        Q1 = _matrix(self.Q1, 6)
        R = _matrix(self.R, 3)
        Pf = terminal_weight_dare(model, Q1, R) if self.Pf is None else _matrix(self.Pf, 6)
        return MpcConfig(N=self.N, Nc=self.Nc, Q1=Q1, Q2=_matrix(self.Q2, 6), R=R, Pf=Pf,
                         Ts=self.Ts, virtual=self.virtual)

    def constraints(self) -> ConstraintSpec:
        return ConstraintSpec.box(u=self.u_max, du=self.du_max, attitude=self.attitude_max, wheel=self.wheel_max)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(eps_V=self.eps_V, eps_g=self.eps_g, max_iters=self.max_iters,
                            arithmetic=self.fixed_format(), raise_on_max_iters=False,
                            raise_on_overflow=self.abort_on_overflow)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "reference":
                v = v.to_dict()
            elif isinstance(v, np.ndarray):
                v = _listify(v) if v.ndim == 2 else v.tolist()
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for k, v in d.items():
            if k == "reference":
                v = Reference(**v)
            elif isinstance(v, list) and k not in ("Q1", "Q2", "R", "Pf", "u_max", "du_max", "attitude_max", "wheel_max"):
                v = tuple(v)
            kw[k] = v
        return cls(**kw)


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return ScenarioConfig.from_dict(json.load(fh))


def save_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
