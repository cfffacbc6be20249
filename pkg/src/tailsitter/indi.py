"""Incremental nonlinear dynamic inversion for attitude and thrust.

The inner loop inverts the incremental model::

    [Omega_dot; T_Z] = [Omega_dot_0; T_Z0] + G (u - u0)

with the bounded WLS allocator. ``G`` stacks the rotor-tilt, thrust and
elevon columns; elevon effectiveness is scheduled on pitch below 12 m/s and
on airspeed above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .model import ActuatorBank, RigidBodyState, VehicleParams, euler_zxy_to_rotation
from .wls import ATTITUDE_WV, DEFAULT_GAMMA, _active_set

AIRSPEED_SCHEDULE_SWITCH = 12.0
MODES = ("tre", "e_tailsitter", "tr_tailsitter")
DISABLED_WEIGHT = 1.0e5


def pitch_ratio(theta: float) -> float:
    """0 in vertical flight, 1 in forward flight, linear in between."""
    if theta >= -math.pi / 6:
        return 0.0
    if theta <= -math.pi / 3:
        return 1.0
    return (theta + math.pi / 6) / (-math.pi / 6)


def elevon_pitch_effectiveness(theta: float, V: float) -> float:
    if V < AIRSPEED_SCHEDULE_SWITCH:
        r = pitch_ratio(theta)
        return 13.10 * (1.0 - r) + 21.83 * r
    return 13.10 + 0.1746 * V * V


def elevon_yaw_effectiveness(theta: float, V: float) -> float:
    if V < AIRSPEED_SCHEDULE_SWITCH:
        r = pitch_ratio(theta)
        return 15.72 * (1.0 - r) + 26.19 * r
    return 15.72 + 0.0873 * V * V


@njit(cache=True)
def _effectiveness(u0, inv_inertia, mass, b, l, g_e25, g_e35):
    G = np.zeros((4, 6))
    dl, dr, tl, tr = u0[0], u0[1], u0[2], u0[3]
    cl, sl, cr, sr = math.cos(dl), math.sin(dl), math.cos(dr), math.sin(dr)
    ix, iy, iz = inv_inertia[0], inv_inertia[1], inv_inertia[2]
    # tilt columns
    G[0, 0] = -b * tl * sl * ix
    G[1, 0] = l * tl * cl * iy
    G[2, 0] = -b * tl * cl * iz
    G[3, 0] = -tl * sl / mass
    G[0, 1] = b * tr * sr * ix
    G[1, 1] = l * tr * cr * iy
    G[2, 1] = b * tr * cr * iz
    G[3, 1] = -tr * sr / mass
    # thrust columns
    G[0, 2] = b * cl * ix
    G[1, 2] = l * sl * iy
    G[2, 2] = -b * sl * iz
    G[3, 2] = cl / mass
    G[0, 3] = -b * cr * ix
    G[1, 3] = l * sr * iy
    G[2, 3] = b * sr * iz
    G[3, 3] = cr / mass
    # elevons: no roll or thrust contribution
    G[1, 4] = g_e25
    G[2, 4] = g_e35
    G[1, 5] = g_e25
    G[2, 5] = -g_e35
    return G


@njit(cache=True)
def _scheduled_gains(theta, V):
    if V >= 12.0:
        return 13.10 + 0.1746 * V * V, 15.72 + 0.0873 * V * V
    if theta >= -math.pi / 6:
        r = 0.0
    elif theta <= -math.pi / 3:
        r = 1.0
    else:
        r = (theta + math.pi / 6) / (-math.pi / 6)
    return 13.10 * (1.0 - r) + 21.83 * r, 15.72 * (1.0 - r) + 26.19 * r


@njit(cache=True)
def _scheduled_weights(theta, lo, hi, w_min, w_max, w_thrust, mode_code):
    """Compiled twin of :class:`WeightSchedule` plus :func:`mode_overrides`."""
    x = min(max((hi - theta) / (hi - lo), 0.0), 1.0)
    s = x * x * (3.0 - 2.0 * x)
    w_tilt = w_min + (w_max - w_min) * s
    w_elev = w_min + (w_max - w_min) * (1.0 - s)
    if mode_code == 1:
        w_tilt, w_elev = DISABLED_WEIGHT, 0.0
    elif mode_code == 2:
        w_tilt, w_elev = 0.0, DISABLED_WEIGHT
    return np.array([w_tilt, w_tilt, w_thrust, w_thrust, w_elev, w_elev])


def build_effectiveness(actuators, theta: float, V: float, params: VehicleParams) -> np.ndarray:
    """4x6 control effectiveness at the current actuator state.

    ``actuators`` is an :class:`ActuatorBank` or a length-6 state vector.
    """
    u0 = actuators.state if isinstance(actuators, ActuatorBank) else np.asarray(actuators, float)
    return _effectiveness(u0, 1.0 / params.inertia_diag, params.mass, params.b, params.l,
                          elevon_pitch_effectiveness(theta, V), elevon_yaw_effectiveness(theta, V))


def _smoothstep(x: float) -> float:
    x = min(max(x, 0.0), 1.0)
    return x * x * (3.0 - 2.0 * x)


@dataclass(frozen=True)
class WeightSchedule:
    """Pitch-scheduled input weights: tilt favoured in hover, elevons in cruise."""

    band: tuple[float, float] = (-math.pi / 3, -math.pi / 6)
    w_min: float = 0.001
    w_max: float = 1.0
    thrust: float = 0.001

    def blend(self, theta: float) -> float:
        lo, hi = self.band
        return _smoothstep((hi - theta) / (hi - lo))

    def __call__(self, theta: float) -> np.ndarray:
        s = self.blend(theta)
        w_tilt = self.w_min + (self.w_max - self.w_min) * s
        w_elev = self.w_min + (self.w_max - self.w_min) * (1.0 - s)
        return np.array([w_tilt, w_tilt, self.thrust, self.thrust, w_elev, w_elev])


def actuator_weights(theta: float, schedule: WeightSchedule = WeightSchedule()) -> np.ndarray:
    return schedule(theta)


def mode_overrides(mode: str, weights: np.ndarray) -> np.ndarray:
    """Weight overrides that turn the TRE vehicle into an E or TR tailsitter."""
    w = weights.copy()
    if mode == "e_tailsitter":
        w[0:2] = DISABLED_WEIGHT
        w[4:6] = 0.0
    elif mode == "tr_tailsitter":
        w[4:6] = DISABLED_WEIGHT
        w[0:2] = 0.0
    elif mode != "tre":
        raise ValueError(f"unknown mode {mode!r}")
    return w


def pinned_actuators(mode: str) -> np.ndarray:
    """Mask of actuators whose command is held at zero in a degraded mode."""
    mask = np.zeros(6, dtype=bool)
    if mode == "e_tailsitter":
        mask[0:2] = True
    elif mode == "tr_tailsitter":
        mask[4:6] = True
    return mask


# ---------------------------------------------------------------------------
# attitude feedback


@njit(cache=True)
def _rotation_error(R, R_ref):
    """Body-frame rotation vector taking ``R`` onto ``R_ref``."""
    E = R.T @ R_ref
    c = 0.5 * (E[0, 0] + E[1, 1] + E[2, 2] - 1.0)
    c = min(1.0, max(-1.0, c))
    angle = math.acos(c)
    vx = E[2, 1] - E[1, 2]
    vy = E[0, 2] - E[2, 0]
    vz = E[1, 0] - E[0, 1]
    s = math.sin(angle)
    if s < 1e-9:
        k = 0.5
    else:
        k = 0.5 * angle / s
    return np.array([k * vx, k * vy, k * vz])


def attitude_error(state: RigidBodyState, phi_ref: float, theta_ref: float, psi_ref: float) -> np.ndarray:
    R_ref = euler_zxy_to_rotation(psi_ref, phi_ref, theta_ref)
    return _rotation_error(state.rotation, R_ref)


@dataclass
class AttitudeObjective:
    phi_ref: float = 0.0
    theta_ref: float = 0.0
    psi_ref: float = 0.0
    thrust_ref: float = 9.81
    k_att: np.ndarray = field(default_factory=lambda: np.array([8.0, 8.0, 5.0]))
    k_rate: np.ndarray = field(default_factory=lambda: np.array([20.0, 20.0, 10.0]))

    def __post_init__(self):
        self.k_att = np.asarray(self.k_att, dtype=float)
        self.k_rate = np.asarray(self.k_rate, dtype=float)
        if np.any(self.k_att <= 0) or np.any(self.k_rate <= 0):
            raise ValueError("attitude gains must be positive")


def attitude_pseudo_control(state: RigidBodyState, ref: AttitudeObjective) -> np.ndarray:
    """``nu = [Omega_dot_ref; T_Z_ref]`` from a P attitude / P rate cascade."""
    err = attitude_error(state, ref.phi_ref, ref.theta_ref, ref.psi_ref)
    nu = np.empty(4)
    nu[:3] = ref.k_rate * (ref.k_att * err - state.omega)
    nu[3] = ref.thrust_ref
    return nu


# ---------------------------------------------------------------------------
# incremental inversion


@dataclass
class IndiConfig:
    gamma: float = DEFAULT_GAMMA
    w_v: np.ndarray = field(default_factory=lambda: np.array(ATTITUDE_WV))
    schedule: WeightSchedule = field(default_factory=WeightSchedule)
    mode: str = "tre"
    max_iter: int = 18

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        self.w_v = np.asarray(self.w_v, dtype=float)


@njit(cache=True)
def _indi_allocate(G, nu_inc, u0, u_pref, lower, upper, w_u, w_v, sqrt_gamma, max_iter):
    n_v, n_u = G.shape
    A = np.zeros((n_v + n_u, n_u))
    b = np.zeros(n_v + n_u)
    Gu0 = G @ u0
    for i in range(n_v):
        for j in range(n_u):
            A[i, j] = sqrt_gamma * w_v[i] * G[i, j]
        b[i] = sqrt_gamma * w_v[i] * (nu_inc[i] + Gu0[i])
    for j in range(n_u):
        A[n_v + j, j] = w_u[j]
        b[n_v + j] = w_u[j] * u_pref[j]
    u_init = np.empty(n_u)
    for j in range(n_u):
        u_init[j] = min(max(u0[j], lower[j]), upper[j])
    return _active_set(A, b, lower, upper, u_init, max_iter, True)


@dataclass
class IndiOutput:
    command: np.ndarray
    nu: np.ndarray
    G: np.ndarray
    weights: np.ndarray
    converged: bool


def preferred_inputs(u0: np.ndarray, params: VehicleParams) -> np.ndarray:
    u_p = u0.copy()
    u_p[2:4] = params.hover_thrust
    return u_p


def command_bounds(bank: ActuatorBank, mode: str) -> tuple[np.ndarray, np.ndarray]:
    lower, upper = bank.lower.copy(), bank.upper.copy()
    pin = pinned_actuators(mode)
    lower[pin] = 0.0
    upper[pin] = 0.0
    return lower, upper


def indi_attitude_step(omega_dot0, thrust0: float, actuators: ActuatorBank, state: RigidBodyState,
                       ref: AttitudeObjective, params: VehicleParams,
                       config: IndiConfig = IndiConfig(), airspeed: float | None = None) -> IndiOutput:
    """One inner-loop update; returns bounded actuator commands."""
    V = state.airspeed if airspeed is None else airspeed
    G = build_effectiveness(actuators, state.theta, V, params)
    nu = attitude_pseudo_control(state, ref)
    y0 = np.concatenate([np.asarray(omega_dot0, float), [thrust0]])
    weights = mode_overrides(config.mode, config.schedule(state.theta))
    lower, upper = command_bounds(actuators, config.mode)
    u0 = actuators.state
    u, _, ok = _indi_allocate(G, nu - y0, u0, preferred_inputs(u0, params), lower, upper,
                              weights, config.w_v, math.sqrt(config.gamma), config.max_iter)
    return IndiOutput(u, nu, G, weights, bool(ok))
