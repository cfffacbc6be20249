"""Outer-loop velocity control, waypoint guidance and flight phases.

The outer loop is itself incremental: measured NED acceleration and specific
thrust are corrected by WLS increments of roll, pitch and specific thrust
through the Jacobian of the specific-force model

    a = R(phi, theta, psi) [0, 0, -T_Z] + g e_z + R L(R^T v_air)

where ``L`` is a thin-airfoil lift term. Without it the pitch column would
vanish in wing-borne flight, where thrust is small and lift does the work.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .indi import pitch_ratio
from .model import RigidBodyState, VehicleParams, euler_zxy_to_rotation
from .wls import DEFAULT_GAMMA, solve_stacked

OUTER_WU = (1.0, 1.0, 1.0)
OUTER_WV = (100.0, 100.0, 1.0)
OUTER_WV_FORWARD = (100.0, 100.0, 100.0)


@dataclass(frozen=True)
class GuidanceGains:
    kp: tuple[float, float, float] = (1.2, 1.2, 1.5)
    kd: tuple[float, float, float] = (2.0, 2.0, 2.2)
    a_max: float = 6.0
    k_ct: float = 0.8
    lateral_cap: float = 5.0
    k_ss: float = 0.25
    sideslip_min_airspeed: float = 4.0
    transition_speed: float = 12.0
    transition_pitch_rate: float = math.pi / 4
    transition_distance: float = 35.0
    transition_accel: float = 3.0
    back_transition_rate: float = 0.785
    corner_speed: float = 10.0
    flare_airspeed: float = 12.0
    corner_decel: float = 0.7
    flare_decel: float = 3.0
    hover_time: float = 3.0
    descent_rate: float = 1.0
    landing_altitude: float = 0.15
    yaw_rate_max: float = 0.6
    lift_coef: float = 0.311

    def __post_init__(self):
        vals = list(self.kp) + list(self.kd) + [
            self.a_max, self.k_ct, self.lateral_cap, self.k_ss, self.transition_speed,
            self.transition_pitch_rate, self.transition_distance, self.transition_accel,
            self.back_transition_rate, self.corner_speed, self.flare_airspeed, self.corner_decel,
            self.flare_decel, self.descent_rate, self.landing_altitude, self.yaw_rate_max]
        if len(self.kp) != 3 or len(self.kd) != 3 or any(not v > 0 for v in vals):
            raise ValueError("guidance gains must be positive")
        if self.hover_time < 0 or self.sideslip_min_airspeed < 0 or self.lift_coef < 0:
            raise ValueError("guidance thresholds must be non-negative")


def pd_accel_reference(p_err, v_err, kp=(1.2, 1.2, 1.5), kd=(2.0, 2.0, 2.2), a_max: float = 6.0) -> np.ndarray:
    """``Kp p_err + Kd v_err`` with the vector norm capped at ``a_max``."""
    kp, kd = np.asarray(kp, float), np.asarray(kd, float)
    if np.any(kp <= 0) or np.any(kd <= 0) or a_max <= 0:
        raise ValueError("PD gains and a_max must be positive")
    a = kp * np.asarray(p_err, float) + kd * np.asarray(v_err, float)
    n = float(np.linalg.norm(a))
    if n > a_max:
        a *= a_max / n
    return a


def protect_airspeed(a_ref, v_air, max_decel: float, a_max: float = 6.0) -> np.ndarray:
    """Limit the horizontal deceleration along the air velocity.

    The tangential part of ``a_ref`` is clipped at ``-max_decel``; the normal
    part is then shrunk so the horizontal norm stays within ``a_max``. Turns
    rotate the velocity instead of braking it.
    """
    a = np.array(a_ref, dtype=float)
    vh = np.asarray(v_air, float)[:2]
    n = float(np.linalg.norm(vh))
    if n < 1e-6:
        return a
    t_hat = vh / n
    a_t = float(a[:2] @ t_hat)
    a_n = a[:2] - a_t * t_hat
    a_t = max(a_t, -max_decel)
    room = math.sqrt(max(a_max ** 2 - a_t ** 2, 0.0))
    nn = float(np.linalg.norm(a_n))
    if nn > room:
        a_n *= room / nn
    a[:2] = a_t * t_hat + a_n
    return a


@dataclass(frozen=True)
class Segment:
    start: np.ndarray
    end: np.ndarray
    speed: float

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, float))
        object.__setattr__(self, "end", np.asarray(self.end, float))
        if self.length <= 0:
            raise ValueError("segment has zero length")
        if self.speed <= 0:
            raise ValueError("segment speed must be positive")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end - self.start))

    @property
    def direction(self) -> np.ndarray:
        return (self.end - self.start) / self.length

    def cross_track(self, p) -> np.ndarray:
        """Vector from the track line to ``p``, perpendicular to the track."""
        r = np.asarray(p, float) - self.start
        t = self.direction
        return r - (r @ t) * t

    def along_track(self, p) -> float:
        return float((np.asarray(p, float) - self.start) @ self.direction)


def vector_field_velocity(p, segment: Segment, k_ct: float = 0.8, lateral_cap: float = 5.0,
                          speed: float | None = None) -> np.ndarray:
    """Desired ground velocity: segment speed along track plus a saturated
    proportional pull back onto the track line. ``speed`` overrides the
    segment speed (used while accelerating into the first leg)."""
    e = segment.cross_track(p)
    corr = -k_ct * e
    n = float(np.linalg.norm(corr))
    if n > lateral_cap:
        corr *= lateral_cap / n
    return (segment.speed if speed is None else speed) * segment.direction + corr


@dataclass
class WaypointPlan:
    waypoints: np.ndarray
    radius: float = 10.0
    speeds: np.ndarray | None = None

    def __post_init__(self):
        self.waypoints = np.atleast_2d(np.asarray(self.waypoints, float))
        n = len(self.waypoints)
        if n < 2 or self.waypoints.shape[1] != 3:
            raise ValueError("a plan needs at least two 3-D waypoints")
        if not self.radius > 0:
            raise ValueError("acceptance radius must be positive")
        if self.speeds is None:
            self.speeds = np.full(n - 1, 16.0)
        self.speeds = np.broadcast_to(np.asarray(self.speeds, float), (n - 1,)).copy()
        if np.any(self.speeds <= 0):
            raise ValueError("segment speeds must be positive")
        for i in range(n - 1):
            self.segment(i)

    @property
    def n_segments(self) -> int:
        return len(self.waypoints) - 1

    def segment(self, i: int) -> Segment:
        return Segment(self.waypoints[i], self.waypoints[i + 1], float(self.speeds[i]))

    @property
    def final(self) -> np.ndarray:
        return self.waypoints[-1]


# ---------------------------------------------------------------------------
# outer-loop incremental inversion


@njit(cache=True)
def _lift(va, k):
    u_f, w_n = -va[2], va[0]
    V = math.hypot(u_f, w_n)
    L = np.zeros(3)
    J = np.zeros((3, 3))
    if V < 1e-6 or k == 0.0:
        return L, J
    s = u_f * w_n / V
    L[0] = -k * s * u_f
    L[2] = -k * s * w_n
    V3 = V**3
    dLx_du = -k * (s + u_f * w_n**3 / V3)
    dLx_dw = -k * u_f**4 / V3
    dLz_du = -k * w_n**4 / V3
    dLz_dw = -k * (s + w_n * u_f**3 / V3)
    # va_x = w_n, va_z = -u_f
    J[0, 0], J[0, 2] = dLx_dw, -dLx_du
    J[2, 0], J[2, 2] = dLz_dw, -dLz_du
    return L, J


def specific_force(phi, theta, psi, thrust_z, gravity=9.81, air_velocity=None, lift_coef=0.0) -> np.ndarray:
    """NED acceleration predicted by the outer-loop model."""
    R = euler_zxy_to_rotation(psi, phi, theta)
    a = -thrust_z * R[:, 2]
    a[2] += gravity
    if air_velocity is not None and lift_coef > 0:
        L, _ = _lift(R.T @ np.asarray(air_velocity, float), float(lift_coef))
        a += R @ L
    return a


@njit(cache=True)
def _outer_jacobian(phi, theta, psi, thrust_z, w, lift_coef):
    cps, sps = math.cos(psi), math.sin(psi)
    cph, sph, cth, sth = math.cos(phi), math.sin(phi), math.cos(theta), math.sin(theta)
    Rz = np.array([[cps, -sps, 0.0], [sps, cps, 0.0], [0.0, 0.0, 1.0]])
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, cph, -sph], [0.0, sph, cph]])
    Ry = np.array([[cth, 0.0, sth], [0.0, 1.0, 0.0], [-sth, 0.0, cth]])
    dRx = np.array([[0.0, 0.0, 0.0], [0.0, -sph, -cph], [0.0, cph, -sph]])
    dRy = np.array([[-sth, 0.0, cth], [0.0, 0.0, 0.0], [-cth, 0.0, -sth]])
    R = Rz @ Rx @ Ry
    dR_phi = Rz @ dRx @ Ry
    dR_theta = Rz @ Rx @ dRy
    J = np.empty((3, 3))
    J[:, 0] = -thrust_z * dR_phi[:, 2]
    J[:, 1] = -thrust_z * dR_theta[:, 2]
    J[:, 2] = -R[:, 2]
    if lift_coef > 0.0:
        L, JL = _lift(R.T @ w, lift_coef)
        J[:, 0] += dR_phi @ L + R @ (JL @ (dR_phi.T @ w))
        J[:, 1] += dR_theta @ L + R @ (JL @ (dR_theta.T @ w))
    return J


def outer_effectiveness(phi, theta, psi, thrust_z, air_velocity=None, lift_coef=0.0) -> np.ndarray:
    """3x3 Jacobian of :func:`specific_force` with respect to ``(phi, theta, T_Z)``."""
    w = np.zeros(3) if air_velocity is None else np.asarray(air_velocity, float)
    return _outer_jacobian(float(phi), float(theta), float(psi), float(thrust_z), w,
                           float(lift_coef) if air_velocity is not None else 0.0)


@dataclass
class OuterConfig:
    gamma: float = DEFAULT_GAMMA
    w_u: np.ndarray = field(default_factory=lambda: np.array(OUTER_WU))
    w_v: np.ndarray = field(default_factory=lambda: np.array(OUTER_WV))
    w_v_forward: np.ndarray = field(default_factory=lambda: np.array(OUTER_WV_FORWARD))
    roll_max: float = math.radians(40.0)
    pitch_range: tuple[float, float] = (math.radians(-45.0), math.radians(30.0))
    attitude_step: float = 0.1
    thrust_z_range: tuple[float, float] = (0.5, 30.0)
    hover_thrust_floor: float = 4.0
    max_iter: int = 9


@dataclass
class OuterOutput:
    increments: np.ndarray
    phi_ref: float
    theta_ref: float
    thrust_z_ref: float
    converged: bool


def outer_output_weights(theta: float, config: OuterConfig = OuterConfig()) -> np.ndarray:
    """Acceleration weights, blended from the hover set to the wing-borne set
    with the pitch ratio.

    In hover the vertical axis is served by thrust and may rank low; in
    wing-borne flight only pitch (through lift) moves it, so it must not be
    traded away for horizontal accuracy.
    """
    r = pitch_ratio(theta)
    return (1.0 - r) * config.w_v + r * config.w_v_forward


def outer_indi_step(a_meas, a_ref, state: RigidBodyState, thrust_z0: float, params: VehicleParams,
                    config: OuterConfig = OuterConfig(), air_velocity=None, lift_coef: float = 0.0,
                    pitch_range: tuple[float, float] | None = None) -> OuterOutput:
    """Roll, pitch and specific-thrust increments that realise ``a_ref``.

    Increments are bounded by the per-step attitude limit and by the
    absolute roll, pitch and thrust envelopes; ``pitch_range`` overrides the
    configured pitch envelope (the transition ramps use this).
    """
    phi, theta = state.phi, state.theta
    J = outer_effectiveness(phi, theta, state.psi, thrust_z0, air_velocity, lift_coef)
    lo_p, hi_p = pitch_range if pitch_range is not None else config.pitch_range
    s = config.attitude_step
    clip = lambda x: min(max(x, -s), s)  # noqa: E731
    r = pitch_ratio(theta)
    floor = (1.0 - r) * max(config.hover_thrust_floor, config.thrust_z_range[0]) + r * config.thrust_z_range[0]
    lower = np.array([clip(-config.roll_max - phi), clip(lo_p - theta), floor - thrust_z0])
    upper = np.array([clip(config.roll_max - phi), clip(hi_p - theta), config.thrust_z_range[1] - thrust_z0])
    upper[2] = max(upper[2], lower[2])
    nu = np.asarray(a_ref, float) - np.asarray(a_meas, float)
    w_v = outer_output_weights(theta, config)
    sg = math.sqrt(config.gamma)
    A = np.vstack([sg * w_v[:, None] * J, np.diag(config.w_u)])
    b = np.concatenate([sg * w_v * nu, np.zeros(3)])
    d, _, ok = solve_stacked(A, b, lower, upper, np.clip(np.zeros(3), lower, upper), config.max_iter)
    return OuterOutput(d, phi + d[0], theta + d[1], thrust_z0 + d[2], bool(ok))


def sideslip_correction(v_lateral: float, airspeed: float, gain: float = 0.25,
                        min_airspeed: float = 4.0) -> float:
    """Yaw-rate command from the lateral air velocity seen from the body.

    ``v_lateral`` is the ``y_b`` component of the relative wind (air velocity
    minus vehicle velocity); the command turns the nose into that wind.
    """
    if airspeed < min_airspeed:
        return 0.0
    return -gain * v_lateral


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


# ---------------------------------------------------------------------------
# flight phases


class FlightPhase(enum.IntEnum):
    GroundedPivotUp = 0
    Hover = 1
    TransitionToForward = 2
    Forward = 3
    TransitionToHover = 4
    PivotDown = 5
    Landed = 6


PIVOT_GATE_ANGLE = math.radians(5.4)
PIVOT_GATE_RATE = 0.1


def pivot_gate(theta: float, q: float, target: float = 0.0) -> bool:
    return abs(theta - target) <= PIVOT_GATE_ANGLE and abs(q) <= PIVOT_GATE_RATE


def flight_phase_update(phase: FlightPhase, state: RigidBodyState, plan: WaypointPlan | None, t: float, *,
                        mission_command: bool = False, segment: int = 0,
                        gains: GuidanceGains = GuidanceGains()) -> FlightPhase:
    """Next flight phase. Each call advances at most one phase."""
    P = FlightPhase
    altitude = -state.position[2]
    if phase == P.GroundedPivotUp:
        return P.Hover if pivot_gate(state.theta, state.omega[1]) else phase
    if phase == P.Hover:
        return P.TransitionToForward if mission_command else phase
    if phase == P.TransitionToForward:
        return P.Forward if state.airspeed >= gains.transition_speed else phase
    if phase == P.Forward:
        if plan is not None and segment >= plan.n_segments - 1:
            d = np.linalg.norm((state.position - plan.final)[:2])
            if d < gains.transition_distance:
                return P.TransitionToHover
        return phase
    if phase == P.TransitionToHover:
        return P.PivotDown if altitude < gains.landing_altitude else phase
    if phase == P.PivotDown:
        at_rest = float(np.linalg.norm(state.omega)) <= PIVOT_GATE_RATE
        return P.Landed if abs(state.theta + math.pi / 2) <= PIVOT_GATE_ANGLE and at_rest else phase
    return phase


@dataclass
class PhaseMachine:
    """Forward-only phase tracker with entry timestamps."""

    phase: FlightPhase = FlightPhase.GroundedPivotUp
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        self.entries.setdefault(self.phase, 0.0)

    def update(self, state, plan, t, **kw) -> bool:
        new = flight_phase_update(self.phase, state, plan, t, **kw)
        if new != self.phase:
            if new in self.entries or new < self.phase:
                raise RuntimeError(f"phase {new.name} revisited")
            self.phase = new
            self.entries[new] = t
            return True
        return False
