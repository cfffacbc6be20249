import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tailsitter.model import (
    ActuatorBank,
    RigidBodyState,
    VehicleParams,
    actuator_step,
    control_moment_from_tilt,
    euler_rates,
    euler_zxy_to_rotation,
    rot_x,
    rot_y,
    rot_z,
    rotation_to_euler_zxy,
    specific_thrust,
)

angle = st.floats(-math.pi + 1e-3, math.pi - 1e-3)
roll = st.floats(-1.4, 1.4)


def crossing_time(t, y, level):
    """Linearly interpolated first crossing of ``level``."""
    i = int(np.argmax(y >= level))
    return t[i - 1] + (level - y[i - 1]) / (y[i] - y[i - 1]) * (t[i] - t[i - 1])


class TestVehicleParams:
    def test_pivot_inertia_defaults_to_parallel_axis(self):
        p = VehicleParams()
        assert p.iyy_pivot == pytest.approx(p.iyy + p.mass * p.l2**2)

    def test_override_recomputes_pivot_inertia(self):
        p = VehicleParams().with_overrides(mass=1.0)
        assert p.iyy_pivot == pytest.approx(p.iyy + 1.0 * p.l2**2)

    @pytest.mark.parametrize("kw", [{"mass": 0.0}, {"ixx": -1.0}, {"l1": 0.05}, {"delta_max": 2.0}])
    def test_rejects_bad_values(self, kw):
        with pytest.raises(ValueError):
            VehicleParams(**kw)

    def test_hover_thrust_balances_weight(self):
        p = VehicleParams()
        assert 2 * p.hover_thrust == pytest.approx(p.mass * p.gravity)


class TestAttitude:
    @given(angle, roll, angle)
    def test_round_trip(self, psi, phi, theta):
        R = euler_zxy_to_rotation(psi, phi, theta)
        back = rotation_to_euler_zxy(R)
        assert np.allclose(back, (psi, phi, theta), atol=1e-9)

    @given(angle, roll, angle)
    def test_rotation_is_proper(self, psi, phi, theta):
        R = euler_zxy_to_rotation(psi, phi, theta)
        assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0)

    def test_matches_elementary_product(self):
        psi, phi, theta = 0.3, -0.2, 1.1
        assert np.allclose(euler_zxy_to_rotation(psi, phi, theta), rot_z(psi) @ rot_x(phi) @ rot_y(theta))

    def test_forward_flight_points_nose_north(self):
        R = euler_zxy_to_rotation(0.0, 0.0, -math.pi / 2)
        nose = R @ np.array([0.0, 0.0, -1.0])
        assert np.allclose(nose, [1.0, 0.0, 0.0], atol=1e-12)

    @settings(max_examples=50)
    @given(angle, roll, angle, st.lists(st.floats(-3, 3), min_size=3, max_size=3))
    def test_euler_rates_match_rotation_kinematics(self, psi, phi, theta, w):
        omega = np.array(w)
        R = euler_zxy_to_rotation(psi, phi, theta)
        phi_dot, theta_dot, psi_dot = euler_rates(phi, theta, omega)
        h = 1e-6
        R2 = euler_zxy_to_rotation(psi + h * psi_dot, phi + h * phi_dot, theta + h * theta_dot)
        skew = R.T @ (R2 - R) / h
        assert np.allclose([skew[2, 1], skew[0, 2], skew[1, 0]], omega, atol=1e-4)

    def test_state_vector_round_trip(self):
        s = RigidBodyState(np.array([1.0, 2, 3]), np.array([4.0, 5, 6]), 0.1, 0.2, 0.3, np.array([7.0, 8, 9]))
        back = RigidBodyState.from_vector(s.as_vector())
        assert np.array_equal(back.as_vector(), s.as_vector())


class TestRotorMaps:
    def test_zero_tilt_gives_pure_roll_moment(self):
        p = VehicleParams()
        M = control_moment_from_tilt(3.0, 2.0, 0.0, 0.0, p)
        assert np.allclose(M, [p.b * 1.0, 0.0, 0.0])

    def test_symmetric_tilt_gives_pure_pitch(self):
        p = VehicleParams()
        M = control_moment_from_tilt(2.0, 2.0, 0.3, 0.3, p)
        assert M[0] == pytest.approx(0.0) and M[2] == pytest.approx(0.0)
        assert M[1] == pytest.approx(2 * p.l * 2.0 * math.sin(0.3))

    def test_specific_thrust(self):
        assert specific_thrust(2.0, 2.0, 0.0, math.pi / 3, 0.5) == pytest.approx(6.0)
        with pytest.raises(ValueError):
            specific_thrust(1.0, 1.0, 0.0, 0.0, 0.0)


class TestActuators:
    dt = 0.002

    @pytest.mark.parametrize("index, amplitude", [(0, 0.05), (2, 1.0), (4, 0.05)])
    def test_step_reaches_63_percent_at_tau(self, index, amplitude):
        p = VehicleParams()
        bank = ActuatorBank.for_vehicle(p)
        cmd = np.zeros(6)
        cmd[index] = amplitude
        t, y = [0.0], [0.0]
        for k in range(1, 30):
            bank = actuator_step(bank, cmd, self.dt)
            t.append(k * self.dt)
            y.append(bank.state[index] / amplitude)
        tau = bank.tau[index]
        assert abs(crossing_time(np.array(t), np.array(y), 1 - math.exp(-1)) - tau) <= self.dt

    def test_servo_rate_limit(self):
        p = VehicleParams()
        bank = ActuatorBank.for_vehicle(p)
        out = actuator_step(bank, np.full(6, 1.0), self.dt)
        assert out.state[0] == pytest.approx(p.servo_rate_limit * self.dt)
        assert out.state[2] > p.servo_rate_limit * self.dt

    def test_commands_are_clamped(self):
        p = VehicleParams()
        bank = ActuatorBank.for_vehicle(p)
        for _ in range(2000):
            bank = actuator_step(bank, np.full(6, 100.0), self.dt)
        assert np.allclose(bank.state, bank.upper)
        assert np.all(bank.command <= bank.upper)

    def test_step_does_not_mutate(self):
        bank = ActuatorBank.for_vehicle(VehicleParams())
        before = bank.state.copy()
        actuator_step(bank, np.ones(6), self.dt)
        assert np.array_equal(bank.state, before)

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ValueError):
            actuator_step(ActuatorBank.for_vehicle(VehicleParams()), np.zeros(6), 0.0)
