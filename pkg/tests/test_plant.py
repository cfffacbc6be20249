import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tailsitter.model import RigidBodyState, VehicleParams, control_moment_from_tilt
from tailsitter.plant import (
    AeroModel,
    WindModel,
    accelerations,
    aero_forces_moments,
    forces_moments,
    pivot_contact_step,
    rigid_body_step,
    tail_position,
)

PARAMS = VehicleParams()
HOVER = np.array([0.0, 0.0, PARAMS.hover_thrust, PARAMS.hover_thrust, 0.0, 0.0])


def invariants(state: RigidBodyState):
    I = PARAMS.inertia_diag
    return 0.5 * float(np.sum(I * state.omega**2)), state.rotation @ (I * state.omega)


class TestRigidBody:
    @pytest.mark.parametrize("omega", [[0.3, 0.2, 4.0], [4.0, 0.3, 0.2], [1.0, 1.0, 1.0]])
    def test_torque_free_top(self, omega):
        s = RigidBodyState(omega=np.array(omega))
        E0, L0 = invariants(s)
        for _ in range(5000):
            s = rigid_body_step(s, np.zeros(3), np.zeros(3), PARAMS, 0.002, gravity=False)
        E, L = invariants(s)
        assert abs(E - E0) <= 1e-6 * E0
        assert np.linalg.norm(L - L0) <= 1e-6 * np.linalg.norm(L0)

    def test_free_fall(self):
        s = RigidBodyState()
        for _ in range(500):
            s = rigid_body_step(s, np.zeros(3), np.zeros(3), PARAMS, 0.002)
        assert s.position[2] == pytest.approx(0.5 * 9.81 * 1.0**2, rel=1e-9)
        assert s.velocity[2] == pytest.approx(9.81, rel=1e-9)

    def test_hover_equilibrium(self):
        x = RigidBodyState().as_vector()
        F, M = forces_moments(x, HOVER, np.zeros(3), PARAMS.as_array(), AeroModel().as_array())
        a, w_dot = accelerations(x, F, M, PARAMS.as_array(), PARAMS.gravity)
        assert np.allclose(a, 0.0, atol=1e-12)
        assert np.allclose(w_dot, 0.0, atol=1e-12)

    def test_rotor_moment_matches_model(self):
        u = np.array([0.2, -0.1, 2.0, 3.0, 0.0, 0.0])
        x = RigidBodyState().as_vector()
        F, M = forces_moments(x, u, np.zeros(3), PARAMS.as_array(), AeroModel(rho=1e-12).as_array())
        assert np.allclose(M, control_moment_from_tilt(2.0, 3.0, 0.2, -0.1, PARAMS), atol=1e-9)

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ValueError):
            rigid_body_step(RigidBodyState(), np.zeros(3), np.zeros(3), PARAMS, -0.1)


class TestAero:
    def test_still_air_no_load(self):
        F, M = aero_forces_moments(RigidBodyState(), np.zeros(6), np.zeros(3))
        assert np.allclose(F, 0.0) and np.allclose(M, 0.0)

    def test_cruise_lift_opposes_gravity(self):
        s = RigidBodyState(velocity=np.array([16.0, 0.0, 0.0]), theta=-math.pi / 2 + 0.1)
        F, _ = aero_forces_moments(s, np.zeros(6), np.zeros(3))
        F_ned = s.rotation @ F
        assert F_ned[2] < 0.0
        assert F_ned[0] < 0.0

    def test_elevon_up_pitches_nose_up_in_cruise(self):
        s = RigidBodyState(velocity=np.array([16.0, 0.0, 0.0]), theta=-math.pi / 2)
        _, M0 = aero_forces_moments(s, np.zeros(6), np.zeros(3))
        _, M1 = aero_forces_moments(s, np.array([0, 0, 0, 0, 0.1, 0.1]), np.zeros(3))
        # nose-up in level flight raises theta towards the vertical
        assert M1[1] > M0[1]

    def test_propwash_makes_elevons_work_in_hover(self):
        _, M = aero_forces_moments(RigidBodyState(), np.array([0, 0, 2.4, 2.4, 0.1, 0.1]), np.zeros(3))
        assert abs(M[1]) > 1e-3

    def test_symmetric_state_no_roll(self):
        s = RigidBodyState(velocity=np.array([12.0, 0.0, 1.0]), theta=-1.2)
        _, M = aero_forces_moments(s, HOVER, np.zeros(3))
        assert M[0] == pytest.approx(0.0, abs=1e-12) and M[2] == pytest.approx(0.0, abs=1e-12)

    def test_wind_equivalent_to_ground_speed(self):
        s1 = RigidBodyState(velocity=np.array([10.0, 0.0, 0.0]), theta=-1.0)
        s2 = RigidBodyState(theta=-1.0)
        F1, M1 = aero_forces_moments(s1, HOVER, np.zeros(3))
        F2, M2 = aero_forces_moments(s2, HOVER, np.array([-10.0, 0.0, 0.0]))
        assert np.allclose(F1, F2) and np.allclose(M1, M2)


class TestPivotContact:
    def test_tail_stays_fixed(self):
        s = RigidBodyState(theta=-1.0)
        s.position = np.array([0.0, 0.0, 0.0]) - (tail_position(s, PARAMS) - s.position)
        tail0 = tail_position(s, PARAMS)
        for _ in range(100):
            s, lifted = pivot_contact_step(s, np.zeros(3), np.zeros(3), PARAMS, 0.002)
            assert not lifted
        assert np.allclose(tail_position(s, PARAMS), tail0, atol=1e-12)

    def test_gravity_tips_forward(self):
        s = RigidBodyState(theta=-0.2)
        for _ in range(50):
            s, _ = pivot_contact_step(s, np.zeros(3), np.zeros(3), PARAMS, 0.002)
        assert s.theta < -0.2 and s.omega[1] < 0

    def test_rests_on_belly(self):
        s = RigidBodyState(theta=-math.pi / 2)
        s, _ = pivot_contact_step(s, np.zeros(3), np.zeros(3), PARAMS, 0.002)
        assert s.theta == -math.pi / 2 and s.omega[1] == 0.0

    def test_lift_off_with_excess_thrust(self):
        s = RigidBodyState(theta=0.0)
        _, lifted = pivot_contact_step(s, np.array([0.0, 0.0, -2 * PARAMS.mass * 9.81]), np.zeros(3), PARAMS, 0.002)
        assert lifted

    def test_upright_divergence_rate(self):
        # near upright the pendulum diverges as cosh(lambda t)
        s = RigidBodyState(theta=-1e-4)
        for _ in range(50):
            s, _ = pivot_contact_step(s, np.zeros(3), np.zeros(3), PARAMS, 0.002)
        lam = math.sqrt(PARAMS.mass * 9.81 * PARAMS.l2 / PARAMS.iyy_pivot)
        assert s.theta == pytest.approx(-1e-4 * math.cosh(lam * 0.1), rel=1e-3)


class TestWind:
    def test_constant(self):
        w = WindModel(mean=np.array([0.0, 6.7, 0.0]))
        assert np.allclose(w.step(0.01), [0.0, 6.7, 0.0])

    def test_seeded_reproducible(self):
        a = WindModel(gust_sigma=np.ones(3), seed=3)
        b = WindModel(gust_sigma=np.ones(3), seed=3)
        assert np.array_equal(a.path(100, 0.01), b.path(100, 0.01))

    def test_path_equals_repeated_steps(self):
        a = WindModel(gust_sigma=np.ones(3), seed=3)
        b = WindModel(gust_sigma=np.ones(3), seed=3)
        steps = np.array([b.step(0.01) for _ in range(5)])
        assert np.allclose(steps, a.path(5, 0.01), rtol=0, atol=1e-14)

    @settings(max_examples=5)
    @given(st.integers(0, 1000))
    def test_gust_statistics(self, seed):
        w = WindModel(gust_sigma=np.array([1.0, 2.0, 0.5]), gust_tau=0.5, seed=seed)
        g = w.path(100_000, 0.05)
        assert np.allclose(g.std(axis=0), [1.0, 2.0, 0.5], rtol=0.1)

    def test_reset(self):
        w = WindModel(gust_sigma=np.ones(3), seed=9)
        first = w.path(10, 0.01)
        w.reset()
        assert np.array_equal(first, w.path(10, 0.01))

    def test_invalid(self):
        with pytest.raises(ValueError):
            WindModel(gust_sigma=np.array([-1.0, 0, 0]))
