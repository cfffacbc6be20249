"""Closed-loop simulation of a scenario.

Each plant step runs, in order: sense, outer loop (every ``outer_divider``
steps), inner loop and allocation, actuator dynamics, integration. Phases with
the tail on the ground use the pivot controller and the pinned-tail plant;
everything else uses the cascaded INDI loops and the free rigid body.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .guidance import (FlightPhase, PhaseMachine, Segment, outer_indi_step, pd_accel_reference, protect_airspeed,
                       sideslip_correction, vector_field_velocity, wrap_angle)
from .indi import (MODES, _effectiveness, _indi_allocate, _rotation_error, _scheduled_gains,
                   _scheduled_weights, pinned_actuators)
from .model import ActuatorBank, RigidBodyState, _lag_rate_clamp, _rotation_zxy
from .pivot import PitchRamp, PivotState, pivot_step
from .plant import (_pivot_rhs, _tail_offset, accelerations, contact_normal_force, forces_moments,
                    pivot_contact_kernel, pivot_moment_terms, rk4_free)
from .scenario import ScenarioConfig, wrap_start_euler
from .telemetry import COLUMNS, INDEX, TelemetryLog

P = FlightPhase
PIVOT_PHASES = (P.GroundedPivotUp, P.PivotDown)


class ConfigError(ValueError):
    pass


class NumericalDivergence(RuntimeError):
    """State left the admissible envelope; ``log`` holds the telemetry so far."""

    def __init__(self, step: int, t: float, log: TelemetryLog):
        super().__init__(f"numerical divergence at step {step} (t={t:.3f} s)")
        self.step = step
        self.t = t
        self.log = log


class Carrot:
    """Rate-limited reference point chasing a target with bounded braking."""

    def __init__(self, p, v=None):
        self.p = np.array(p, dtype=float)
        v = np.zeros(3) if v is None else np.asarray(v, float)
        self.v = v.copy()
        self.speed = np.array([np.linalg.norm(v[:2]), abs(v[2])])

    def step(self, target, vmax_h: float, vmax_v: float, brake: float, dt: float) -> None:
        target = np.asarray(target, float)
        for k, (sl, vmax) in enumerate(((slice(0, 2), vmax_h), (slice(2, 3), vmax_v))):
            d = target[sl] - self.p[sl]
            dist = float(np.linalg.norm(d))
            s = self.speed[k]
            s = max(vmax, s - brake * dt) if s > vmax else min(vmax, s + brake * dt)
            s = min(s, math.sqrt(2.0 * brake * dist))
            self.speed[k] = s
            if dist < 1e-12:
                self.v[sl] = 0.0
                continue
            step = min(s * dt, dist)
            self.p[sl] += d / dist * step
            self.v[sl] = d / dist * (step / dt)


UPRIGHT_FOR_YAW = math.radians(30.0)


class _LowPass:
    """Two cascaded first-order stages at the same cut-off."""

    def __init__(self, fc: float, dt: float, x0):
        self.a = 1.0 if fc <= 0 else dt / (dt + 1.0 / (2.0 * math.pi * fc))
        self.s1 = np.array(x0, dtype=float)
        self.s2 = self.s1.copy()

    def __call__(self, x):
        self.s1 += self.a * (x - self.s1)
        self.s2 += self.a * (self.s1 - self.s2)
        return self.s2.copy()


@njit(cache=True)
def _inner_kernel(x, R, act, u0, omega_dot, tz0, att_ref, tz_ref, V, sched, mode_code, lower, upper,
                  k_att, k_rate, w_v, sqrt_g, max_iter, inv_I, mass, b, l, hover_thrust):
    """Attitude feedback, effectiveness, weights and WLS allocation for one step."""
    g25, g35 = _scheduled_gains(x[7], V)
    G = _effectiveness(act, inv_I, mass, b, l, g25, g35)
    w = _scheduled_weights(x[7], sched[0], sched[1], sched[2], sched[3], sched[4], mode_code)
    R_ref = _rotation_zxy(att_ref[2], att_ref[0], att_ref[1])
    err = _rotation_error(R, R_ref)
    nu = np.empty(4)
    for i in range(3):
        nu[i] = k_rate[i] * (k_att[i] * err[i] - x[9 + i])
    nu[3] = tz_ref
    inc = np.empty(4)
    for i in range(3):
        inc[i] = nu[i] - omega_dot[i]
    inc[3] = nu[3] - tz0
    u_pref = u0.copy()
    u_pref[2] = hover_thrust
    u_pref[3] = hover_thrust
    u, _, _ = _indi_allocate(G, inc, u0, u_pref, lower, upper, w, w_v, sqrt_g, max_iter)
    return u, nu


@njit(cache=True)
def _advance(x, act, u, lower, upper, rate, tau, dt, wind, vp, ap, gravity, contact, tail, m_dist):
    """Actuator lag, then one plant step. Returns (x, act, contact, F, M)."""
    act = _lag_rate_clamp(act, u, lower, upper, rate, tau, dt)
    F, M = forces_moments(x, act, wind, vp, ap)
    if contact:
        xn, lifted = pivot_contact_kernel(x, tail, F, M, vp, m_dist, dt)
        if lifted:
            contact = False
            xn = rk4_free(x, F, M, vp, gravity, dt)
    else:
        xn = rk4_free(x, F, M, vp, gravity, dt)
    F, M = forces_moments(xn, act, wind, vp, ap)
    return xn, act, contact, F, M


def _track_heading(seg: Segment) -> float:
    d = seg.direction
    return math.atan2(d[1], d[0])


def _meta(cfg: ScenarioConfig, dt: float) -> dict:
    m = cfg.values["mission"]
    wps = ";".join(",".join(repr(float(v)) for v in w) for w in m["waypoints"])
    return {
        "scenario": cfg.name, "mode": cfg.mode, "seed": str(cfg.seed), "dt": repr(dt),
        "profile": m["profile"], "radius": repr(float(m["radius"])), "waypoints": wps,
        "k1": repr(cfg.values["pivot"]["k1"]), "k2": repr(cfg.values["pivot"]["k2"]),
        "settle_time": repr(float(m["settle_time"])),
    }


def simulate_scenario(cfg: ScenarioConfig) -> TelemetryLog:
    """Run the configured mission. Deterministic for a given config and seed."""
    cfg.validate()
    params = cfg.vehicle_params()
    vp = params.as_array()
    ap = cfg.aero_model().as_array()
    gains = cfg.pivot_gains()
    gg = cfg.guidance_gains()
    indi = cfg.indi_config()
    att = cfg.attitude_objective()
    outer = cfg.outer_config()
    wind = cfg.wind_model()
    plan = cfg.plan()
    m = cfg.values["mission"]
    sim = cfg.values["sim"]
    pv = cfg.values["pivot"]
    fwd_range = tuple(math.radians(a) for a in cfg.values["outer"]["forward_pitch_deg"])
    hov_range = outer.pitch_range

    dt = float(sim["dt"])
    div = int(sim["outer_divider"])
    dt_o = dt * div
    n_steps = int(round(cfg.duration / dt))
    if n_steps < 1:
        raise ConfigError("duration shorter than one step")
    if params.tau_servo < 0.5 * dt:
        raise ConfigError("plant step too coarse for the servo time constant")
    profile = m["profile"]
    if profile == "circuit" and plan is None:
        raise ConfigError("circuit profile needs waypoints")
    if profile == "pivot" and m["start_phase"] != "GroundedPivotUp":
        raise ConfigError("pivot profile must start on the ground")

    rng = np.random.default_rng(cfg.seed + 7919)
    mode = indi.mode
    pinned = pinned_actuators(mode)
    bank = ActuatorBank.for_vehicle(params)
    lower, upper = bank.lower.copy(), bank.upper.copy()
    lower_c, upper_c = lower.copy(), upper.copy()
    lower_c[pinned] = 0.0
    upper_c[pinned] = 0.0
    inv_I = 1.0 / params.inertia_diag
    sqrt_g = math.sqrt(indi.gamma)
    w_v = indi.w_v
    k_att, k_rate = att.k_att, att.k_rate
    kp, kd = np.array(gg.kp), np.array(gg.kd)

    # initial condition
    start_phase = P[m["start_phase"]]
    x = np.zeros(12)
    tail = np.zeros(3)
    contact = start_phase == P.GroundedPivotUp
    u = np.zeros(6)
    if contact:
        th0 = math.radians(m["start_theta_deg"])
        psi0 = wrap_start_euler(cfg)[2]
        x[:3] = _tail_offset(th0, psi0, params.l2)
        x[7], x[8] = th0, psi0
    else:
        x[:3] = m["start_position"]
        x[6], x[7], x[8] = wrap_start_euler(cfg)
        u[2:4] = params.hover_thrust / math.cos(x[7]) if abs(x[7]) < 1.0 else params.hover_thrust
    u = np.clip(u, lower_c, upper_c)
    act = u.copy()

    machine = PhaseMachine(start_phase)
    ramp = PitchRamp(x[7], 0.0, pv["ramp_rate"], 0.0)
    carrot = Carrot(x[:3] if not contact else x[:3])
    hover_target = np.array(m["start_position"], float)
    if profile == "circuit":
        hover_target = plan.waypoints[0].copy()
    if contact and profile != "circuit":
        hover_target = np.array([x[0], x[1], -max(1.0, -hover_target[2])])
    segment = 0
    psi_ref = x[8]
    phi_ref, theta_ref, tz_ref = x[6], x[7], params.gravity
    p_ref, v_ref = x[:3].copy(), np.zeros(3)
    ready_since = None
    landing_descent = False
    settle_t = None
    fwd_entry_t = None
    hover_entry_t = None
    captured = False
    wind_filter = _LowPass(0.1, dt * div, wind.current)
    wind_est = wind.current.copy()
    capture_t = 0.0
    capture_theta = 0.0
    flare_done = False
    along_speed = 0.0
    omega_filter = _LowPass(cfg.values["indi"]["filter_hz"], dt, np.zeros(3))
    u0_filter = _LowPass(cfg.values["indi"]["filter_hz"], dt, act)
    use_filter = cfg.values["indi"]["filter_hz"] > 0
    # outer measurement and increment base share one filter so their delays match
    outer_fc = cfg.values["outer"]["accel_filter_hz"]
    outer_filter = None

    data = np.zeros((n_steps + 1, len(COLUMNS)))
    meta = _meta(cfg, dt)
    bound = float(sim["divergence_bound"])
    stop_after = float(sim["stop_after_gate"])
    gusts = wind.path(n_steps + 1, dt)
    w_now = wind.current
    sched = np.array([*indi.schedule.band, indi.schedule.w_min, indi.schedule.w_max, indi.schedule.thrust])
    mode_code = MODES.index(mode)
    F, M = forces_moments(x, act, w_now, vp, ap)
    t_stop = None
    row = 0

    for k in range(n_steps + 1):
        t = k * dt
        # ---- sense
        if contact:
            m_ext = pivot_moment_terms(x, F, M, vp) + pv["disturbance"]
            _, q_dot = _pivot_rhs(x[7], x[10], m_ext, vp)
            omega_dot = np.array([0.0, q_dot, 0.0])
            N = contact_normal_force(x, F, vp, q_dot)
            R = _rotation_zxy(x[8], x[6], x[7])
            a_meas = (R @ F + N) / params.mass
            a_meas[2] += params.gravity
        else:
            a_meas, omega_dot = accelerations(x, F, M, vp, params.gravity)
            R = _rotation_zxy(x[8], x[6], x[7])
        v_air = x[3:6] - w_now
        wind_est = wind_filter(w_now) if k % div == 0 else wind_est
        airspeed = math.sqrt(float(v_air @ v_air))
        airspeed_meas = airspeed
        if sim["airspeed_noise"] > 0:
            airspeed_meas = max(0.0, airspeed + sim["airspeed_noise"] * rng.standard_normal())
        tz0 = (act[2] * math.cos(act[0]) + act[3] * math.cos(act[1])) / params.mass
        if use_filter:
            omega_dot = omega_filter(omega_dot)
            u0 = u0_filter(act)
        else:
            u0 = act
        state = RigidBodyState(x[0:3], x[3:6], x[6], x[7], x[8], x[9:12], airspeed_meas)
        sample = np.array([*a_meas, x[6], x[7], tz0])
        if outer_filter is None:
            outer_filter = _LowPass(outer_fc, dt, sample)
        sample = outer_filter(sample)
        a_outer = sample[:3]
        outer_state = RigidBodyState(x[0:3], x[3:6], sample[3], sample[4], x[8], x[9:12], airspeed_meas)

        # ---- phase logic
        phase = machine.phase
        mission_go = False
        if phase == P.Hover and profile == "circuit":
            seg0 = plan.segment(0)
            ok = (np.linalg.norm(x[:3] - plan.waypoints[0]) < 1.0 and np.linalg.norm(x[3:6]) < 0.5
                  and abs(wrap_angle(x[8] - _track_heading(seg0))) < math.radians(5.0))
            if ok:
                ready_since = t if ready_since is None else ready_since
                mission_go = t - ready_since >= gg.hover_time
            else:
                ready_since = None
        if machine.update(state, plan, t, mission_command=mission_go, segment=segment, gains=gg):
            new = machine.phase
            if new == P.Hover:
                hover_entry_t = t
                carrot = Carrot(x[:3], x[3:6])
                psi_ref = x[8]
                phi_ref, theta_ref = x[6], x[7]
            elif new == P.TransitionToForward:
                fwd_entry_t = t
                along_speed = max(0.0, float(x[3:6] @ plan.segment(0).direction))
            elif new == P.TransitionToHover:
                hover_target = plan.final.copy()
            elif new == P.Landed:
                t_stop = t + stop_after
            if new == P.Hover and profile == "pivot":
                t_stop = t + stop_after
        phase = machine.phase

        # touchdown before the pivot-down controller takes over
        if phase == P.PivotDown and not contact:
            tail_pos = x[:3] + params.l2 * R[:, 2]
            if tail_pos[2] >= 0.0:
                contact = True
                tail = np.array([tail_pos[0], tail_pos[1], 0.0])
                q = x[10]
                x[:] = 0.0
                x[7], x[8], x[10] = state.theta, state.psi, q
                off = _tail_offset(x[7], x[8], params.l2)
                x[:3] = tail + off
                ramp = PitchRamp(x[7], -0.5 * math.pi, pv["landing_ramp_rate"], t)
                F, M = forces_moments(x, act, w_now, vp, ap)

        # ---- outer loop
        pivoting = contact and phase in PIVOT_PHASES
        if not pivoting and k % div == 0:
            pitch_range = hov_range
            a_ff = np.zeros(3)
            flaring = False
            tracking = phase in (P.TransitionToForward, P.Forward) or (phase == P.TransitionToHover and not captured)
            if tracking:
                seg = plan.segment(segment)
                tailwind = float(wind_est @ seg.direction)
                target_speed = max(seg.speed, gg.transition_speed + tailwind)
                if phase != P.TransitionToForward:
                    # brake into corners and onto the final waypoint
                    last = segment == plan.n_segments - 1
                    to_go = max(seg.length - seg.along_track(x[:3]), 0.0)
                    # corner speed is an airspeed: add the tailwind component
                    v_end = 0.0 if last else max(gg.corner_speed + tailwind, 0.0)
                    target_speed = min(target_speed, math.sqrt(v_end ** 2 + 2.0 * gg.corner_decel * to_go))
                    v_g = float(np.linalg.norm(x[3:6]))
                    # flare early enough to stop on the spot, unless still too fast to pitch up
                    stopping = v_g * v_g > 2.0 * gg.flare_decel * to_go and airspeed_meas < 1.2 * gg.flare_airspeed
                    if last and phase == P.TransitionToHover and (to_go < 1.0 or stopping or airspeed_meas < gg.flare_airspeed
                                                                   or v_g < m["hover_speed"][0]):
                        captured = True
                        capture_t = t
                        capture_theta = x[7]
                        carrot = Carrot(x[:3], x[3:6])
                along_speed = min(target_speed, along_speed + gg.transition_accel * dt_o)
                v_ref = vector_field_velocity(x[:3], seg, gg.k_ct, gg.lateral_cap, along_speed)
                s = min(max(seg.along_track(x[:3]), 0.0), seg.length)
                p_ref = seg.start + s * seg.direction
                p_err = np.array([0.0, 0.0, p_ref[2] - x[2]])
                a_ref = pd_accel_reference(p_err, v_ref - x[3:6], kp, kd, gg.a_max)
                if phase == P.Forward:
                    a_ref = protect_airspeed(a_ref, v_air, gg.corner_decel, gg.a_max)
                if phase == P.TransitionToForward:
                    hi = max(hov_range[1] - gg.transition_pitch_rate * (t - fwd_entry_t), fwd_range[1])
                    pitch_range = (fwd_range[0], hi)
                elif phase == P.TransitionToHover:
                    pitch_range = (fwd_range[0], hov_range[1])
                else:
                    pitch_range = fwd_range
                    passed = (np.linalg.norm(x[:3] - seg.end) < plan.radius
                              or seg.along_track(x[:3]) >= seg.length)
                    if passed and segment < plan.n_segments - 1:
                        segment += 1
                # heading follows the turn and the relative wind
                vh2 = x[3] ** 2 + x[4] ** 2
                rate = 0.0
                if vh2 > 1.0:
                    rate = (x[3] * a_ref[1] - x[4] * a_ref[0]) / vh2
                v_lat = -(R.T @ v_air)[1]
                rate += sideslip_correction(v_lat, airspeed_meas, gg.k_ss, gg.sideslip_min_airspeed)
                rate = min(max(rate, -gg.yaw_rate_max), gg.yaw_rate_max)
                psi_ref = x[8] + min(max(wrap_angle(psi_ref + rate * dt_o - x[8]), -0.5), 0.5)
            else:
                if phase == P.Hover:
                    target = hover_target
                    if profile == "vertical":
                        target = _vertical_target(m, hover_target, t - (hover_entry_t or 0.0))
                    if profile == "circuit":
                        psi_des = _track_heading(plan.segment(0))
                        err = wrap_angle(psi_des - psi_ref)
                        psi_ref = wrap_angle(psi_ref + min(max(err, -gg.yaw_rate_max * dt_o),
                                                           gg.yaw_rate_max * dt_o))
                    vh, vv = m["hover_speed"]
                    if profile == "vertical":
                        vv = m["vertical_speed"]
                else:
                    # deceleration, settling and descent to the landing spot
                    # the ramp waits at its end until the vehicle catches up
                    flare = min(capture_theta + gg.back_transition_rate * (t - capture_t), -UPRIGHT_FOR_YAW)
                    flaring = captured and x[7] < -UPRIGHT_FOR_YAW and not flare_done
                    flare_done = flare_done or (captured and not flaring)
                    if flaring:
                        # prescribed nose-up flare; thrust and roll stay with the outer loop
                        pitch_range = (flare, flare)
                    else:
                        pitch_range = hov_range
                    target = hover_target.copy()
                    vh, vv = m["hover_speed"]
                    # land with the wind along the span
                    psi_w = math.atan2(wind_est[1], wind_est[0])
                    if wind_est[0] ** 2 + wind_est[1] ** 2 > 1.0 and x[7] > -UPRIGHT_FOR_YAW:
                        a1, a2 = psi_w + 0.5 * math.pi, psi_w - 0.5 * math.pi
                        psi_des = a1 if abs(wrap_angle(a1 - psi_ref)) < abs(wrap_angle(a2 - psi_ref)) else a2
                        err = wrap_angle(psi_des - psi_ref)
                        psi_ref = wrap_angle(psi_ref + min(max(err, -gg.yaw_rate_max * dt_o), gg.yaw_rate_max * dt_o))
                    aligned = abs(wrap_angle(psi_ref - x[8])) < math.radians(5.0)
                    if not landing_descent:
                        near = (np.linalg.norm(x[:3] - hover_target) < 1.0
                                and np.linalg.norm(x[3:6]) < 0.5 and aligned)
                        settle_t = (t if settle_t is None else settle_t) if near else None
                        landing_descent = settle_t is not None and t - settle_t >= 1.0
                    if landing_descent:
                        target[2] = 0.0
                        vv = gg.descent_rate
                carrot.step(target, vh, vv, m["brake_accel"], dt_o)
                p_ref, v_ref = carrot.p.copy(), carrot.v.copy()
                a_ref = pd_accel_reference(p_ref - x[:3], v_ref - x[3:6], kp, kd, gg.a_max)
                if flaring:
                    # drag brakes the flare; thrust only holds altitude
                    a_ref[:2] = a_outer[:2]
                    carrot = Carrot(x[:3].copy(), x[3:6].copy())
                    carrot.p[2] = p_ref[2]
            out = outer_indi_step(a_outer, a_ref, outer_state, sample[5], params, outer, v_air, gg.lift_coef,
                                  pitch_range)
            phi_ref, theta_ref, tz_ref = out.phi_ref, out.theta_ref, out.thrust_z_ref

        # ---- inner loop
        nu = np.zeros(4)
        if pivoting:
            th_d, th_d_dot = ramp(t)
            cmd = pivot_step(PivotState(x[7], x[10], th_d, th_d_dot), gains, params)
            u = np.clip(cmd.actuators(), lower_c, upper_c)
            nu[3] = cmd.thrust / params.mass
            att_ref = (0.0, th_d, x[8])
        else:
            att_ref = (phi_ref, theta_ref, psi_ref)
            u, nu = _inner_kernel(x, R, act, u0, omega_dot, tz0, np.array(att_ref), tz_ref, airspeed_meas,
                                  sched, mode_code, lower_c, upper_c, k_att, k_rate, w_v, sqrt_g,
                                  indi.max_iter, inv_I, params.mass, params.b, params.l,
                                  params.hover_thrust)

        sat = 0
        for i in range(6):
            if not pinned[i] and (u[i] <= lower[i] or u[i] >= upper[i]):
                sat |= 1 << i

        # ---- telemetry
        r = data[row]
        r[0], r[1] = t, float(phase)
        r[2:14] = x
        r[14] = airspeed_meas
        r[15:21] = u
        r[21:27] = act
        r[27] = sat
        r[28:32] = nu
        r[32:35] = p_ref
        r[35:38] = v_ref
        r[38:41] = att_ref
        r[41] = 1.0 if contact else 0.0
        row += 1
        if not np.abs(x).max() <= bound:
            meta.update(rows=str(row), diverged="true", divergence_step=str(k))
            raise NumericalDivergence(k, t, TelemetryLog(data[:row].copy(), meta))
        if not contact and x[2] > 0.0 and phase not in PIVOT_PHASES and phase != P.Landed:
            # the ground is not modelled beyond the tail pivot: a free-flight crossing ends the run
            meta["ground_impact"] = repr(t)
            break
        if k == n_steps or (t_stop is not None and t >= t_stop):
            break

        # ---- actuate and integrate
        w_now = gusts[k]
        x, act, contact, F, M = _advance(x, act, u, lower, upper, bank.rate_limit, bank.tau, dt, w_now,
                                         vp, ap, params.gravity, contact, tail, pv["disturbance"])

    meta.update(rows=str(row), diverged="false")
    return TelemetryLog(data[:row].copy(), meta)


def _vertical_target(m: dict, start: np.ndarray, tau: float) -> np.ndarray:
    """Climb-hold-descend schedule of the vertical profile."""
    target = start.copy()
    settle, hold = m["settle_time"], m["hold_time"]
    climb_dur = (m["climb_altitude"] + start[2]) / m["vertical_speed"]
    if settle <= tau < settle + climb_dur + hold:
        target[2] = -m["climb_altitude"]
    return target
