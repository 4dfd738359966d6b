"""Nonlinear spacecraft attitude model with three reaction wheels.

State ordering of the 9-vector used throughout:
``(phi, theta, psi, omega_1, omega_2, omega_3, wheel_1, wheel_2, wheel_3)``
where the angles are roll/pitch/yaw Euler angles, ``omega`` the body rates
and ``wheel`` the wheel spin rates.  The full gyroscopic and wheel coupling
terms are kept; this model is the simulation ground truth only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = [
    "GimbalLockError",
    "InertiaParams",
    "PlantState",
    "plant_derivative",
    "integrate_step",
    "integrate_interval",
    "angular_momentum",
    "DEFAULT_GIMBAL_MARGIN",
]

DEFAULT_GIMBAL_MARGIN = 1e-3


class GimbalLockError(RuntimeError):
    """Pitch angle reached the Euler-angle kinematic singularity."""


@dataclass(frozen=True)
class InertiaParams:
    """Principal spacecraft inertias ``J`` and wheel inertias ``Jw`` (kg m^2)."""

    J: tuple[float, float, float] = (3000.0, 1500.0, 2000.0)
    Jw: tuple[float, float, float] = (50.0, 50.0, 50.0)

    def __post_init__(self):
        object.__setattr__(self, "J", tuple(float(v) for v in self.J))
        object.__setattr__(self, "Jw", tuple(float(v) for v in self.Jw))
        if len(self.J) != 3 or len(self.Jw) != 3:
            raise ParameterError("J and Jw must have three entries each")
        for j, jw in zip(self.J, self.Jw):
            if not (j > jw > 0):
                raise ParameterError(f"need J_i > Jw_i > 0, got J={self.J}, Jw={self.Jw}")


@dataclass(frozen=True)
class PlantState:
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0
    omega: tuple[float, float, float] = (0.0, 0.0, 0.0)
    wheel_speed: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(v) for v in self.omega))
        object.__setattr__(self, "wheel_speed", tuple(float(v) for v in self.wheel_speed))
        if not np.all(np.isfinite(self.as_vector())):
            raise ValueError("plant state must be finite")

    def as_vector(self) -> np.ndarray:
        return np.array([self.phi, self.theta, self.psi, *self.omega, *self.wheel_speed], dtype=float)

    @classmethod
    def from_vector(cls, x) -> "PlantState":
        x = np.asarray(x, dtype=float)
        return cls(x[0], x[1], x[2], tuple(x[3:6]), tuple(x[6:9]))

    @property
    def attitude(self) -> np.ndarray:
        return np.array([self.phi, self.theta, self.psi])

    def controller_state(self) -> np.ndarray:
        """Attitude and wheel speeds, the 6 states seen by the MPC model."""
        return np.array([self.phi, self.theta, self.psi, *self.wheel_speed])


def _as_array(x) -> np.ndarray:
    if isinstance(x, PlantState):
        return x.as_vector()
    return np.asarray(x, dtype=float)


def _rates(v, u, J, K, dist, gimbal_margin):
    phi, th, psi, w1, w2, w3, a1, a2, a3 = v
    u1, u2, u3 = u
    if abs(th) >= math.pi / 2 - gimbal_margin:
        raise GimbalLockError(f"pitch {th!r} rad within {gimbal_margin} of +/- pi/2")
    J1, J2, J3 = J
    K1, K2, K3 = K
    d1, d2, d3 = dist

    sp, cp = math.sin(phi), math.cos(phi)
    st, ct = math.sin(th), math.cos(th)
    phi_dot = w1 + (sp * w2 + cp * w3) * st / ct
    th_dot = cp * w2 - sp * w3
    psi_dot = (sp * w2 + cp * w3) / ct

    dw1 = ((J2 - J3) * w2 * w3 - K1 * (a3 * w2 - a2 * w3) - u1 + d1) / (J1 + K1)
    dw2 = ((J3 - J1) * w1 * w3 - K2 * (a1 * w3 - a3 * w1) - u2 + d2) / (J2 + K2)
    dw3 = ((J1 - J2) * w1 * w2 - K3 * (a2 * w1 - a1 * w2) - u3 + d3) / (J3 + K3)
    return (phi_dot, th_dot, psi_dot, dw1, dw2, dw3, u1 / K1, u2 / K2, u3 / K3)


def _unpack(u, params, disturbance):
    u = tuple(float(a) for a in u)
    dist = (0.0, 0.0, 0.0) if disturbance is None else tuple(float(a) for a in disturbance)
    return u, tuple(params.J), tuple(params.Jw), dist


def plant_derivative(x, u, params: InertiaParams, disturbance=None,
                     gimbal_margin: float = DEFAULT_GIMBAL_MARGIN) -> np.ndarray:
    """Time derivative of the 9-state model for wheel torques ``u``.

    ``disturbance`` is an optional constant body torque (N m) acting on the
    spacecraft, injected as ``d_i / (J_i + Jw_i)`` on the body-rate equations.
    """
    u, J, K, dist = _unpack(u, params, disturbance)
    return np.array(_rates(tuple(_as_array(x).tolist()), u, J, K, dist, gimbal_margin))


def _rk4(v, dt, f):
    k1 = f(v)
    k2 = f(tuple(a + 0.5 * dt * b for a, b in zip(v, k1)))
    k3 = f(tuple(a + 0.5 * dt * b for a, b in zip(v, k2)))
    k4 = f(tuple(a + dt * b for a, b in zip(v, k3)))
    c = dt / 6.0
    return tuple(a + c * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(v, k1, k2, k3, k4))


def integrate_step(x, u, params: InertiaParams, dt: float, disturbance=None,
                   gimbal_margin: float = DEFAULT_GIMBAL_MARGIN):
    """One classical RK4 step with ``u`` held constant.

    Returns the same kind of object that was passed in (PlantState or array).
    """
    out = integrate_interval(x, u, params, dt, 1, disturbance, gimbal_margin)
    if isinstance(x, PlantState):
        return PlantState.from_vector(out)
    return out


def integrate_interval(x, u, params: InertiaParams, dt: float, steps: int, disturbance=None,
                       gimbal_margin: float = DEFAULT_GIMBAL_MARGIN) -> np.ndarray:
    """``steps`` consecutive RK4 steps of size ``dt`` under a constant input."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    u, J, K, dist = _unpack(u, params, disturbance)

    def f(s):
        return _rates(s, u, J, K, dist, gimbal_margin)

    v = tuple(_as_array(x).tolist())
    for _ in range(steps):
        v = _rk4(v, dt, f)
    return np.array(v)


def angular_momentum(x, params: InertiaParams) -> np.ndarray:
    """Body-frame total angular momentum of spacecraft plus wheels."""
    v = _as_array(x)
    J = np.asarray(params.J)
    Jw = np.asarray(params.Jw)
    return (J + Jw) * v[3:6] + Jw * v[6:9]
