"""Physics plant: forces and moments, 6-DOF rigid body, tail-pivot contact,
and wind.

The aerodynamic model is a flat-plate, full-envelope approximation (valid for
any angle of attack including reversed flow) plus elevon forces driven by a
local dynamic pressure that combines free stream and propwash. Its elevon
coefficients are calibrated so that the plant's elevon effectiveness in cruise
matches the controller's airspeed schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .model import RigidBodyState, VehicleParams, _rotation_zxy, euler_rates

# packed VehicleParams indices
_M, _G, _IXX, _IYY, _IZZ, _B, _L, _L1, _L2, _IYYP = range(10)


@dataclass(frozen=True)
class AeroModel:
    rho: float = 1.225
    wing_area: float = 0.071
    chord: float = 0.142
    span: float = 0.5
    cl_alpha: float = 3.5
    cd0: float = 0.03
    cd90: float = 1.2
    cy_beta: float = 0.2
    x_cg: float = 0.033
    x_ac: float = 0.0357
    x_cp90: float = 0.045
    cm_q: float = -2.0
    cl_p: float = -0.4
    cn_r: float = -0.05
    cn_beta: float = 0.01
    elevon_coef: float = 0.00665
    elevon_arm: float = 0.12
    elevon_span: float = 0.2
    disk_area: float = 0.01267
    wash_efficiency: float = 0.182
    reverse_speed: float = 1.5
    wash_floor: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([
            self.rho, self.wing_area, self.chord, self.span, self.cl_alpha, self.cd0, self.cd90,
            self.cy_beta, self.x_cg, self.x_ac, self.x_cp90, self.cm_q, self.cl_p, self.cn_r,
            self.cn_beta, self.elevon_coef, self.elevon_arm, self.elevon_span, self.disk_area,
            self.wash_efficiency, self.reverse_speed, self.wash_floor,
        ], dtype=np.float64)


@njit(cache=True)
def _air_velocity(x, wind):
    R = _rotation_zxy(x[8], x[6], x[7])
    rel = np.empty(3)
    for i in range(3):
        rel[i] = x[3 + i] - wind[i]
    return R.T @ rel


@njit(cache=True)
def _aero(x, act, wind, ap):
    rho, S, c, span, cla, cd0, cd90, cyb = ap[0], ap[1], ap[2], ap[3], ap[4], ap[5], ap[6], ap[7]
    x_cg, x_ac, x_cp90 = ap[8], ap[9], ap[10]
    cmq, clp, cnr, cnb = ap[11], ap[12], ap[13], ap[14]
    k_e, arm_e, y_e, disk, eta, v_rev, k_min = ap[15], ap[16], ap[17], ap[18], ap[19], ap[20], ap[21]

    va = _air_velocity(x, wind)
    u_f = -va[2]  # flow along the chord, nose to tail
    w_n = va[0]   # flow onto the belly
    v_s = va[1]
    V2_xz = u_f * u_f + w_n * w_n
    V = math.sqrt(V2_xz + v_s * v_s)
    F = np.zeros(3)
    M = np.zeros(3)

    if V2_xz > 0.0:
        alpha = math.atan2(w_n, u_f)
        sa, ca = math.sin(alpha), math.cos(alpha)
        qbar = 0.5 * rho * V2_xz
        lift = qbar * S * cla * sa * ca
        drag = qbar * S * (cd0 + cd90 * sa * sa)
        f_nose = -drag * ca + lift * sa
        f_belly = -drag * sa - lift * ca
        F[0] += f_belly
        F[2] += -f_nose
        # centre of pressure moves aft with angle of attack, to 3/4 chord in reversed flow
        d = (x_cp90 - (x_cp90 - x_ac) * ca) - x_cg
        M[1] += d * F[0]
    if V > 0.0:
        F[1] += -0.5 * rho * S * cyb * V * v_s
        M[0] += -0.5 * rho * S * span * cnb * V * v_s
        damp = 0.25 * rho * V * S
        M[0] += damp * span * span * cnr * x[9]
        M[1] += damp * c * c * cmq * x[10]
        M[2] += damp * span * span * clp * x[11]
        if V2_xz > 0.0:
            M[0] += -d * F[1]

    q_free = 0.5 * rho * u_f * abs(u_f)
    if u_f >= 0.0:
        kappa = 1.0
    else:
        # the slipstream thins as the rotors descend into it, down to a floor
        kappa = max(k_min, 1.0 + u_f / v_rev)
    for side in range(2):
        T = act[2 + side]
        ct = math.cos(act[side])
        q_wash = 0.0
        if T > 0.0 and ct > 0.0:
            q_wash = eta * kappa * ct * T / disk
        f = k_e * (q_free + q_wash) * act[4 + side]
        y = -y_e if side == 0 else y_e
        F[0] += f
        M[1] += arm_e * f
        M[2] += -y * f
    return F, M


@njit(cache=True)
def _rotor(act, b, l):
    F = np.zeros(3)
    M = np.zeros(3)
    dl, dr, tl, tr = act[0], act[1], act[2], act[3]
    sl, cl, sr, cr = math.sin(dl), math.cos(dl), math.sin(dr), math.cos(dr)
    F[0] = -tl * sl - tr * sr
    F[2] = -tl * cl - tr * cr
    M[0] = b * tl * cl - b * tr * cr
    M[1] = l * tl * sl + l * tr * sr
    M[2] = -b * tl * sl + b * tr * sr
    return F, M


@njit(cache=True)
def forces_moments(x, act, wind, vp, ap):
    """Body-frame force and moment about the CG from rotors and aerodynamics."""
    Fr, Mr = _rotor(act, vp[_B], vp[_L])
    Fa, Ma = _aero(x, act, wind, ap)
    return Fr + Fa, Mr + Ma


@njit(cache=True)
def _derivative(x, F, M, vp, gravity):
    dx = np.empty(12)
    R = _rotation_zxy(x[8], x[6], x[7])
    a = R @ F
    m = vp[_M]
    for i in range(3):
        dx[i] = x[3 + i]
        dx[3 + i] = a[i] / m
    dx[5] += gravity
    om = x[9:12]
    phd, thd, psd = euler_rates(x[6], x[7], om)
    dx[6] = phd
    dx[7] = thd
    dx[8] = psd
    I0, I1, I2 = vp[_IXX], vp[_IYY], vp[_IZZ]
    p, q, r = om[0], om[1], om[2]
    # Euler's equation with the gyroscopic term
    dx[9] = (M[0] - (I2 - I1) * q * r) / I0
    dx[10] = (M[1] - (I0 - I2) * r * p) / I1
    dx[11] = (M[2] - (I1 - I0) * p * q) / I2
    return dx


@njit(cache=True)
def rk4_free(x, F, M, vp, gravity, dt):
    k1 = _derivative(x, F, M, vp, gravity)
    k2 = _derivative(x + 0.5 * dt * k1, F, M, vp, gravity)
    k3 = _derivative(x + 0.5 * dt * k2, F, M, vp, gravity)
    k4 = _derivative(x + dt * k3, F, M, vp, gravity)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def accelerations(x, F, M, vp, gravity):
    """NED linear acceleration of the CG and body angular acceleration."""
    dx = _derivative(x, F, M, vp, gravity)
    return dx[3:6].copy(), dx[9:12].copy()


def aero_forces_moments(state: RigidBodyState, actuators, wind, aero: AeroModel = AeroModel()):
    """Aerodynamic body force and moment (rotor thrust excluded)."""
    act = getattr(actuators, "state", actuators)
    return _aero(state.as_vector(), np.asarray(act, float), np.asarray(wind, float), aero.as_array())


def rigid_body_step(state: RigidBodyState, F, M, params: VehicleParams, dt: float,
                    gravity: bool = True) -> RigidBodyState:
    """RK4 step with body force ``F`` and moment ``M`` held over ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = params.gravity if gravity else 0.0
    x = rk4_free(state.as_vector(), np.asarray(F, float), np.asarray(M, float), params.as_array(), g, dt)
    return RigidBodyState.from_vector(x, state.airspeed)


# ---------------------------------------------------------------------------
# tail pivot contact


@njit(cache=True)
def _tail_offset(theta, psi, l2):
    """NED vector from the tail line to the CG (roll held at zero)."""
    st, ct = math.sin(theta), math.cos(theta)
    return np.array([-l2 * math.cos(psi) * st, -l2 * math.sin(psi) * st, -l2 * ct])


@njit(cache=True)
def pivot_moment_terms(x, F, M, vp):
    """Pitch moment about the tail line from body force and CG moment
    (gravity excluded)."""
    # CG sits l2 ahead of the tail along -z_b
    return M[1] - vp[_L2] * F[0]


@njit(cache=True)
def _pivot_rhs(theta, q, m_ext, vp):
    return q, (m_ext + vp[_M] * vp[_G] * vp[_L2] * math.sin(theta)) / vp[_IYYP]


@njit(cache=True)
def rk4_pivot(theta, q, m_ext, vp, dt):
    a1, b1 = _pivot_rhs(theta, q, m_ext, vp)
    a2, b2 = _pivot_rhs(theta + 0.5 * dt * a1, q + 0.5 * dt * b1, m_ext, vp)
    a3, b3 = _pivot_rhs(theta + 0.5 * dt * a2, q + 0.5 * dt * b2, m_ext, vp)
    a4, b4 = _pivot_rhs(theta + dt * a3, q + dt * b3, m_ext, vp)
    th = theta + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
    qq = q + dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
    return th, qq


@njit(cache=True)
def contact_normal_force(x, F, vp, q_dot):
    """Ground reaction (NED) needed to keep the tail fixed."""
    theta, psi, q = x[7], x[8], x[10]
    l2 = vp[_L2]
    st, ct = math.sin(theta), math.cos(theta)
    cps, sps = math.cos(psi), math.sin(psi)
    e1 = np.array([cps * ct, sps * ct, -st])
    e2 = np.array([-cps * st, -sps * st, -ct])
    a_cg = -l2 * q_dot * e1 - l2 * q * q * e2
    R = _rotation_zxy(psi, 0.0, theta)
    F_ned = R @ F
    F_ned[2] += vp[_M] * vp[_G]
    return vp[_M] * a_cg - F_ned


@njit(cache=True)
def pivot_contact_kernel(x, tail, F, M, vp, m_dist, dt):
    """Advance the pinned-tail pendulum. Returns (x_new, lifted_off)."""
    m_ext = pivot_moment_terms(x, F, M, vp) + m_dist
    theta, q = x[7], x[10]
    _, q_dot = _pivot_rhs(theta, q, m_ext, vp)
    N = contact_normal_force(x, F, vp, q_dot)
    if N[2] > 0.0:
        return x.copy(), True
    th, qq = rk4_pivot(theta, q, m_ext, vp, dt)
    if th <= -0.5 * math.pi and qq <= 0.0:
        th = -0.5 * math.pi
        qq = 0.0
    elif th >= 0.5 * math.pi and qq >= 0.0:
        th = 0.5 * math.pi
        qq = 0.0
    psi = x[8]
    off = _tail_offset(th, psi, vp[_L2])
    xn = np.zeros(12)
    for i in range(3):
        xn[i] = tail[i] + off[i]
    st, ct = math.sin(th), math.cos(th)
    l2 = vp[_L2]
    xn[3] = -l2 * math.cos(psi) * ct * qq
    xn[4] = -l2 * math.sin(psi) * ct * qq
    xn[5] = l2 * st * qq
    xn[6] = 0.0
    xn[7] = th
    xn[8] = psi
    xn[10] = qq
    return xn, False


def tail_position(state: RigidBodyState, params: VehicleParams) -> np.ndarray:
    """NED position of the tail contact line (CG minus l2 along -z_b)."""
    return state.position - params.l2 * (state.rotation @ np.array([0.0, 0.0, -1.0]))


def pivot_contact_step(state: RigidBodyState, F, M, params: VehicleParams, dt: float,
                       disturbance: float = 0.0) -> tuple[RigidBodyState, bool]:
    """Integrate the tail-pivot pendulum for one step.

    ``F`` and ``M`` are the body force and CG moment of rotors and aero. The
    second return value is true when the tail would need to be pulled down,
    i.e. the vehicle lifts off and should continue in free flight.
    """
    x = state.as_vector()
    tail = tail_position(state, params)
    xn, lifted = pivot_contact_kernel(x, tail, np.asarray(F, float), np.asarray(M, float),
                                      params.as_array(), float(disturbance), dt)
    return RigidBodyState.from_vector(xn, state.airspeed), bool(lifted)


# ---------------------------------------------------------------------------
# wind


@dataclass
class WindModel:
    """Constant NED wind plus first-order coloured gusts (seeded)."""

    mean: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gust_sigma: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gust_tau: float = 2.0
    seed: int = 0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.gust_sigma = np.asarray(self.gust_sigma, dtype=float)
        if np.any(self.gust_sigma < 0) or self.gust_tau <= 0:
            raise ValueError("gust parameters must be non-negative with positive time constant")
        self.reset()

    def reset(self):
        self._rng = np.random.default_rng(self.seed)
        self._gust = self.gust_sigma * self._rng.standard_normal(3)

    @property
    def current(self) -> np.ndarray:
        return self.mean + self._gust

    def path(self, n: int, dt: float) -> np.ndarray:
        """The winds seen after each of the next ``n`` calls to :meth:`step`."""
        a = math.exp(-dt / self.gust_tau)
        noise = self._rng.standard_normal((n, 3)) * (self.gust_sigma * math.sqrt(1.0 - a * a))
        out = np.empty((n, 3))
        g = self._gust
        for i in range(n):
            g = a * g + noise[i]
            out[i] = self.mean + g
        self._gust = g
        return out

    def step(self, dt: float) -> np.ndarray:
        a = math.exp(-dt / self.gust_tau)
        self._gust = a * self._gust + self.gust_sigma * math.sqrt(1.0 - a * a) * self._rng.standard_normal(3)
        return self.current
