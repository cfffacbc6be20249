"""Vehicle parameters, attitude conventions and the physical maps shared by
controller and plant.

Frames
------
NED inertial frame. Body frame of the tailsitter: ``-z_b`` points out of the
nose (thrust direction at zero tilt), ``y_b`` along the right wing, ``x_b``
out of the belly. Attitude is the ZXY Euler sequence ``R = Rz(psi) Rx(phi)
Ry(theta)`` so ``theta = 0`` is the upright hover attitude and
``theta = -pi/2`` is level forward flight with the belly facing down.

Actuator vector ordering is ``[delta_TL, delta_TR, T_L, T_R, delta_EL,
delta_ER]`` with upward tilt / upward elevon deflection positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

ACTUATOR_NAMES = ("tilt_l", "tilt_r", "thrust_l", "thrust_r", "elevon_l", "elevon_r")
TILT = slice(0, 2)
THRUST = slice(2, 4)
ELEVON = slice(4, 6)

DEG = math.pi / 180.0


@dataclass(frozen=True)
class VehicleParams:
    """Mass, inertia, geometry and actuator data of the TRE tailsitter.

    Geometry: ``b`` and ``l`` are the offsets from the CG to the tilt axis
    along ``y_b`` and ``z_b``; ``l1`` and ``l2`` are the distances from the
    tail pivot line to the tilt axis and to the CG.
    """

    mass: float = 0.489
    gravity: float = 9.81
    ixx: float = 0.0035
    iyy: float = 0.0021
    izz: float = 0.0055
    iyy_pivot: float | None = None
    b: float = 0.14
    l: float = 0.05
    l1: float = 0.13
    l2: float = 0.10
    delta_max: float = 63.0 * DEG
    thrust_max: float = 8.56
    tau_servo: float = 0.00325
    tau_motor: float = 0.00707
    servo_rate_limit: float = 12.54

    def __post_init__(self):
        if self.iyy_pivot is None:
            # parallel-axis transfer to the tail line
            object.__setattr__(self, "iyy_pivot", self.iyy + self.mass * self.l2**2)
        checks = {
            "mass": self.mass > 0,
            "gravity": self.gravity > 0,
            "ixx": self.ixx > 0,
            "iyy": self.iyy > 0,
            "izz": self.izz > 0,
            "iyy_pivot": self.iyy_pivot > 0,
            "b": self.b > 0,
            "l": self.l >= 0,
            "l2": self.l2 > 0,
            "l1": self.l1 > self.l2,
            "delta_max": 0 < self.delta_max < math.pi / 2,
            "thrust_max": self.thrust_max > 0,
            "tau_servo": self.tau_servo > 0,
            "tau_motor": self.tau_motor > 0,
            "servo_rate_limit": self.servo_rate_limit > 0,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise ValueError(f"invalid vehicle parameters: {', '.join(bad)}")

    @property
    def inertia(self) -> np.ndarray:
        return np.diag([self.ixx, self.iyy, self.izz])

    @property
    def inertia_diag(self) -> np.ndarray:
        return np.array([self.ixx, self.iyy, self.izz])

    @property
    def hover_thrust(self) -> float:
        """Per-motor thrust that balances weight at zero tilt."""
        return 0.5 * self.mass * self.gravity

    def with_overrides(self, **kw) -> "VehicleParams":
        if "iyy_pivot" not in kw and any(k in kw for k in ("iyy", "mass", "l2")):
            kw["iyy_pivot"] = None
        return replace(self, **kw)

    def as_array(self) -> np.ndarray:
        """Packed layout consumed by the compiled plant kernels."""
        return np.array(
            [self.mass, self.gravity, self.ixx, self.iyy, self.izz, self.b, self.l,
             self.l1, self.l2, self.iyy_pivot],
            dtype=np.float64,
        )


# ---------------------------------------------------------------------------
# attitude


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@njit(cache=True)
def _rotation_zxy(psi, phi, theta):
    cps, sps = math.cos(psi), math.sin(psi)
    cph, sph = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    R = np.empty((3, 3))
    R[0, 0] = cps * cth - sps * sph * sth
    R[0, 1] = -sps * cph
    R[0, 2] = cps * sth + sps * sph * cth
    R[1, 0] = sps * cth + cps * sph * sth
    R[1, 1] = cps * cph
    R[1, 2] = sps * sth - cps * sph * cth
    R[2, 0] = -cph * sth
    R[2, 1] = sph
    R[2, 2] = cph * cth
    return R


def euler_zxy_to_rotation(psi: float, phi: float, theta: float) -> np.ndarray:
    """Body-to-NED rotation for yaw ``psi``, roll ``phi``, pitch ``theta``."""
    return _rotation_zxy(float(psi), float(phi), float(theta))


def rotation_to_euler_zxy(R: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`euler_zxy_to_rotation`, returns ``(psi, phi, theta)``."""
    phi = math.asin(max(-1.0, min(1.0, R[2, 1])))
    theta = math.atan2(-R[2, 0], R[2, 2])
    psi = math.atan2(-R[0, 1], R[1, 1])
    return psi, phi, theta


@njit(cache=True)
def euler_rates(phi, theta, omega):
    """ZXY Euler angle rates ``(phi_dot, theta_dot, psi_dot)`` from body rates."""
    p, q, r = omega[0], omega[1], omega[2]
    cth, sth = math.cos(theta), math.sin(theta)
    phi_dot = cth * p + sth * r
    psi_dot = (-sth * p + cth * r) / math.cos(phi)
    theta_dot = q - math.sin(phi) * psi_dot
    return phi_dot, theta_dot, psi_dot


@dataclass
class RigidBodyState:
    """Translational and rotational state of the airframe (CG reference)."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    airspeed: float = 0.0

    @property
    def euler(self) -> np.ndarray:
        return np.array([self.phi, self.theta, self.psi])

    @property
    def rotation(self) -> np.ndarray:
        return euler_zxy_to_rotation(self.psi, self.phi, self.theta)

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.position, self.velocity, [self.phi, self.theta, self.psi], self.omega]
        ).astype(np.float64)

    @classmethod
    def from_vector(cls, x: np.ndarray, airspeed: float = 0.0) -> "RigidBodyState":
        x = np.asarray(x, dtype=float)
        return cls(x[0:3].copy(), x[3:6].copy(), float(x[6]), float(x[7]), float(x[8]),
                   x[9:12].copy(), airspeed)


# ---------------------------------------------------------------------------
# rotor maps


def control_moment_from_tilt(T_L, T_R, delta_TL, delta_TR, params: VehicleParams) -> np.ndarray:
    """Body moment of the two tilted rotors about the CG."""
    b, l = params.b, params.l
    return np.array([
        b * T_L * math.cos(delta_TL) - b * T_R * math.cos(delta_TR),
        l * T_L * math.sin(delta_TL) + l * T_R * math.sin(delta_TR),
        -b * T_L * math.sin(delta_TL) + b * T_R * math.sin(delta_TR),
    ])


def specific_thrust(T_L, T_R, delta_TL, delta_TR, mass) -> float:
    """Thrust per unit mass along ``-z_b``."""
    if mass <= 0:
        raise ValueError("mass must be positive")
    return (T_L * math.cos(delta_TL) + T_R * math.cos(delta_TR)) / mass


# ---------------------------------------------------------------------------
# actuators


@dataclass
class ActuatorBank:
    """Commanded and modeled states of the six actuators."""

    command: np.ndarray
    state: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    rate_limit: np.ndarray
    tau: np.ndarray

    @classmethod
    def for_vehicle(cls, params: VehicleParams, state=None) -> "ActuatorBank":
        dm, tm = params.delta_max, params.thrust_max
        lower = np.array([-dm, -dm, 0.0, 0.0, -dm, -dm])
        upper = np.array([dm, dm, tm, tm, dm, dm])
        rate = np.array([params.servo_rate_limit] * 2 + [np.inf] * 2 + [params.servo_rate_limit] * 2)
        tau = np.array([params.tau_servo] * 2 + [params.tau_motor] * 2 + [params.tau_servo] * 2)
        x = np.zeros(6) if state is None else np.clip(np.asarray(state, float), lower, upper)
        return cls(x.copy(), x.copy(), lower, upper, rate, tau)

    def copy(self) -> "ActuatorBank":
        return ActuatorBank(*(a.copy() for a in
                              (self.command, self.state, self.lower, self.upper, self.rate_limit, self.tau)))


@njit(cache=True)
def _lag_rate_clamp(state, command, lower, upper, rate_limit, tau, dt):
    out = np.empty(6)
    for i in range(6):
        c = min(max(command[i], lower[i]), upper[i])
        k = dt / tau[i]
        target = (state[i] + k * c) / (1.0 + k)
        step = target - state[i]
        cap = rate_limit[i] * dt
        if step > cap:
            step = cap
        elif step < -cap:
            step = -cap
        out[i] = min(max(state[i] + step, lower[i]), upper[i])
    return out


def actuator_step(bank: ActuatorBank, commands, dt: float) -> ActuatorBank:
    """Advance the first-order actuator lag by ``dt`` (implicit Euler), then
    apply servo rate limits and clamp to bounds. Returns a new bank."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    cmd = np.clip(np.asarray(commands, dtype=np.float64), bank.lower, bank.upper)
    new_state = _lag_rate_clamp(bank.state, cmd, bank.lower, bank.upper, bank.rate_limit, bank.tau, dt)
    return ActuatorBank(cmd, new_state, bank.lower.copy(), bank.upper.copy(),
                        bank.rate_limit.copy(), bank.tau.copy())
