"""Reduced-order linear prediction model and its exact ZOH discretization.

Model state: ``(phi, theta, psi, wheel_1, wheel_2, wheel_3)``, input: the
three wheel torques.  Body rates are eliminated through momentum
conservation, so each attitude angle is driven by its own wheel speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import InertiaParams
from .errors import ParameterError

__all__ = [
    "ParameterError",
    "LinearModel",
    "DiscreteModel",
    "wheel_gain",
    "build_continuous_model",
    "discretize_zoh",
]


@dataclass(frozen=True)
class LinearModel:
    Ac: np.ndarray
    Bc: np.ndarray


@dataclass(frozen=True)
class DiscreteModel:
    A: np.ndarray
    B: np.ndarray
    Ts: float

    @property
    def nx(self) -> int:
        return self.A.shape[0]

    @property
    def nu(self) -> int:
        return self.B.shape[1]


def wheel_gain(J: float, Jw: float) -> float:
    """Wheel acceleration per unit torque in the reduced model, J / (J Jw - Jw^2)."""
    den = J * Jw - Jw * Jw
    if den <= 0 or Jw <= 0:
        raise ParameterError(f"wheel gain undefined for J={J}, Jw={Jw}")
    return J / den


def build_continuous_model(params: InertiaParams) -> LinearModel:
    Ac = np.zeros((6, 6))
    Bc = np.zeros((6, 3))
    for i, (J, Jw) in enumerate(zip(params.J, params.Jw)):
        Bc[3 + i, i] = wheel_gain(J, Jw)
        Ac[i, 3 + i] = -Jw / J
    return LinearModel(Ac, Bc)


def discretize_zoh(model: LinearModel, Ts: float) -> DiscreteModel:
    """Zero-order-hold discretization.

    ``Ac`` is nilpotent (``Ac @ Ac == 0``), so the exponential series stops
    after the linear term and the result is exact.
    """
    if Ts <= 0:
        raise ValueError(f"Ts must be positive, got {Ts}")
    Ac, Bc = model.Ac, model.Bc
    if np.any(Ac @ Ac != 0):
        raise ParameterError("continuous model is not nilpotent of index 2")
    A = np.eye(Ac.shape[0]) + Ts * Ac
    B = Ts * Bc + (Ts * Ts / 2.0) * (Ac @ Bc)
    return DiscreteModel(A, B, float(Ts))
