"""Lyapunov pitch controller for pivot takeoff and landing.

While the tail rests on the ground the airframe is a one degree-of-freedom
pendulum about the tail line::

    I'_yy q_dot = l1 T sin(delta) + m g l2 sin(theta)

The virtual input ``u = T sin(delta)`` is split into an equilibrium part and
a feedback increment, and the increment is shared between thrust and tilt by a
weighted pseudo-inverse around the equilibrium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import VehicleParams

THRUST_SCALE = 8.56
TILT_SCALE = 63.0 * math.pi / 180.0


class DegenerateEffectiveness(ArithmeticError):
    pass


@dataclass(frozen=True)
class PivotGains:
    k1: float = 4.0
    k2: float = 6.0

    def __post_init__(self):
        if not (self.k1 > 0 and self.k2 > 0):
            raise ValueError("pivot gains must be positive")


@dataclass(frozen=True)
class PivotState:
    theta: float
    q: float
    theta_d: float
    theta_d_dot: float = 0.0

    @property
    def x1(self) -> float:
        return self.theta - self.theta_d


@dataclass(frozen=True)
class PivotCommand:
    thrust: float
    tilt: float

    def actuators(self) -> np.ndarray:
        """Identical left/right commands, elevons neutral."""
        half = 0.5 * self.thrust
        return np.array([self.tilt, self.tilt, half, half, 0.0, 0.0])


def auxiliary_state(state: PivotState, gains: PivotGains) -> float:
    return gains.k1 * (state.theta - state.theta_d) + state.q - state.theta_d_dot


def lyapunov_energy(z: float) -> float:
    """``E = z^2 / 2`` of the auxiliary state ``z`` (see :func:`auxiliary_state`)."""
    return 0.5 * z * z


def pivot_equilibrium(theta: float, params: VehicleParams) -> tuple[float, float]:
    """Thrust and (unclamped) tilt that hold ``theta`` statically."""
    if params.l1 <= 0:
        raise ValueError("l1 must be positive")
    return params.mass * params.gravity * params.l2 / params.l1, -theta


def equilibrium_input(theta: float, params: VehicleParams) -> float:
    return -params.mass * params.gravity * params.l2 * math.sin(theta) / params.l1


def pivot_feedback(state: PivotState, gains: PivotGains, params: VehicleParams) -> float:
    """Feedback part of the virtual input ``u = T sin(delta)``.

    Equal to the full Lyapunov control law minus its equilibrium term, with
    the reference acceleration taken as zero.
    """
    scale = params.iyy_pivot / params.l1
    x1 = state.theta - state.theta_d
    return -scale * (gains.k1 * gains.k2 * x1 + (gains.k1 + gains.k2) * (state.q - state.theta_d_dot))


def lyapunov_control(state: PivotState, gains: PivotGains, params: VehicleParams,
                     theta_d_ddot: float = 0.0) -> float:
    """Full virtual input in expanded form, before any allocation."""
    I, l1 = params.iyy_pivot, params.l1
    m, g, l2 = params.mass, params.gravity, params.l2
    z = auxiliary_state(state, gains)
    return (I / l1) * (-gains.k1 * state.q + gains.k1 * state.theta_d_dot
                       - m * g * l2 * math.sin(state.theta) / I + theta_d_ddot - gains.k2 * z)


def pivot_allocate(delta_u: float, theta: float, params: VehicleParams) -> tuple[float, float]:
    """Minimum weighted-norm ``(dT, d_delta)`` with ``B [dT, d_delta] = delta_u``."""
    T_eq, delta_eq = pivot_equilibrium(theta, params)
    B = np.array([math.sin(delta_eq), T_eq * math.cos(delta_eq)])
    if np.linalg.norm(B) <= 1e-9:
        raise DegenerateEffectiveness("pivot effectiveness vanishes")
    W_inv = np.array([THRUST_SCALE**2, TILT_SCALE**2])
    denom = float(B @ (W_inv * B))
    if denom < 1e-12:
        raise DegenerateEffectiveness("pivot effectiveness vanishes")
    x = W_inv * B * (delta_u / denom)
    return float(x[0]), float(x[1])


def pivot_step(state: PivotState, gains: PivotGains, params: VehicleParams) -> PivotCommand:
    """Total thrust and common tilt command, clamped to actuator limits."""
    T_eq, delta_eq = pivot_equilibrium(state.theta, params)
    dT, d_delta = pivot_allocate(pivot_feedback(state, gains, params), state.theta, params)
    T = min(max(T_eq + dT, 0.0), 2.0 * params.thrust_max)
    delta = min(max(delta_eq + d_delta, -params.delta_max), params.delta_max)
    return PivotCommand(T, delta)


@dataclass
class PitchRamp:
    """Pitch reference moving from ``start`` to ``end`` at ``rate`` rad/s."""

    start: float
    end: float
    rate: float
    t0: float = 0.0

    def __call__(self, t: float) -> tuple[float, float]:
        span = self.end - self.start
        if self.rate <= 0 or span == 0:
            return self.end, 0.0
        duration = abs(span) / self.rate
        tau = t - self.t0
        if tau <= 0:
            return self.start, 0.0
        if tau >= duration:
            return self.end, 0.0
        return self.start + math.copysign(self.rate, span) * tau, math.copysign(self.rate, span)
