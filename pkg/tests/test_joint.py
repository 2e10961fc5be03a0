"""Antagonistic joint plant: kinematics, gravity, stiffness, stepping."""

import math

import numpy as np
import pytest

from antmuscle import (
    JointState,
    MuscleState,
    from_co_contraction_bias,
    gravity_stiffness,
    gravity_torque,
    joint_step,
    joint_stiffness_step,
    muscle_torque,
    strain_of,
    to_co_contraction_bias,
)
from antmuscle.errors import FeasibilityError, InstabilityError
from antmuscle.joint import mechanical_energy, per_muscle_step_stiffness
from antmuscle.presets import JOINT_PARAMS, reference_joint

DT = 5e-4


class TestStrainKinematics:
    def test_zero_angle(self):
        assert strain_of(JOINT_PARAMS, 0.0, 1) == 0.0

    def test_muscle_two_contracts_with_positive_rotation(self):
        # xi = 0.03 / 0.16 = 0.1875
        assert strain_of(JOINT_PARAMS, 0.16, 2) == pytest.approx(0.03, rel=1e-12)

    def test_antisymmetry(self):
        rng = np.random.default_rng(0)
        for theta in rng.uniform(-0.6, 0.6, size=100):
            assert strain_of(JOINT_PARAMS, theta, 1) == -strain_of(
                JOINT_PARAMS, theta, 2
            )


class TestGravity:
    def test_zero_at_reference(self):
        assert gravity_torque(JOINT_PARAMS, JOINT_PARAMS.theta_g) == 0.0

    def test_quarter_turn(self):
        # m_l * g * l_c = 1.0 * 9.81 * 0.1
        assert gravity_torque(JOINT_PARAMS, math.pi / 2) == pytest.approx(0.981)

    def test_odd_symmetry(self):
        for x in (0.1, 0.4, 1.0):
            assert gravity_torque(JOINT_PARAMS, x) == pytest.approx(
                -gravity_torque(JOINT_PARAMS, -x)
            )

    def test_stiffness_at_reference(self):
        assert gravity_stiffness(JOINT_PARAMS, 0.0) == pytest.approx(0.981)

    def test_stiffness_vanishes_at_quarter_turn(self):
        assert gravity_stiffness(JOINT_PARAMS, math.pi / 2) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_stiffness_matches_finite_difference(self):
        h = 1e-6
        for theta in (-0.5, 0.0, 0.3, 1.2):
            fd = (
                gravity_torque(JOINT_PARAMS, theta + h)
                - gravity_torque(JOINT_PARAMS, theta - h)
            ) / (2.0 * h)
            assert abs(fd - gravity_stiffness(JOINT_PARAMS, theta)) < 1e-8


class TestMuscleTorque:
    def test_balanced_pair(self):
        assert muscle_torque(JOINT_PARAMS, 12.0, 12.0) == 0.0

    def test_single_sided(self):
        assert muscle_torque(JOINT_PARAMS, 10.0, 0.0) == pytest.approx(0.3)

    def test_swap_negates(self):
        assert muscle_torque(JOINT_PARAMS, 3.0, 7.5) == -muscle_torque(
            JOINT_PARAMS, 7.5, 3.0
        )

    def test_negative_force_rejected(self):
        with pytest.raises(FeasibilityError, match="slack"):
            muscle_torque(JOINT_PARAMS, -1.0, 2.0)


class TestCoContractionBias:
    def test_symmetric(self):
        cb = to_co_contraction_bias(0.5, 0.5)
        assert (cb.c, cb.b) == (0.5, 0.0)

    def test_extreme_bias(self):
        cb = to_co_contraction_bias(1.0, 0.0)
        assert (cb.c, cb.b) == (0.5, 0.5)

    def test_round_trip(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            a1, a2 = rng.uniform(0.0, 1.0, size=2)
            cb = to_co_contraction_bias(a1, a2)
            b1, b2 = from_co_contraction_bias(cb.c, cb.b)
            assert abs(b1 - a1) <= 1e-15
            assert abs(b2 - a2) <= 1e-15

    def test_infeasible_inverse_names_bound(self):
        with pytest.raises(FeasibilityError, match="min"):
            from_co_contraction_bias(0.9, 0.3)


class TestJointStiffness:
    def test_zero_activation_leaves_passive_terms(self):
        model = reference_joint()
        state = model.equilibrium_state(0.0, (0.0, 0.0))
        k = joint_stiffness_step(model, state, (0.0, 0.0), DT)
        expected = JOINT_PARAMS.K_j + gravity_stiffness(JOINT_PARAMS, 0.0)
        assert k == pytest.approx(expected, rel=1e-12)

    def test_series_stiffness_composition(self):
        # K_s = k_s + eta/dt = 2370.9 + 64.98/0.0005
        model = reference_joint()
        K_s = 2370.9 + 64.98 / DT
        assert K_s == pytest.approx(132330.9)
        from antmuscle.muscle import base_force_derivative

        state = model.equilibrium_state(0.0, (1.0, 1.0))
        k_act = abs(base_force_derivative(model.muscle_1.coeffs, state.muscle_1.x))
        expected = k_act * K_s / (k_act + K_s)
        got = per_muscle_step_stiffness(model.muscle_1, 1.0, state.muscle_1.x, DT)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_stiff_series_limit_is_active_slope(self):
        from antmuscle.joint import MuscleModel
        from antmuscle.muscle import MuscleDynamicParams, base_force_derivative
        from antmuscle.presets import HASEL_COEFFS

        stiff = MuscleModel(
            coeffs=HASEL_COEFFS,
            params=MuscleDynamicParams(k_s=1e12, eta=0.0, tau_a=0.04),
        )
        x = 0.01
        k_act = abs(base_force_derivative(HASEL_COEFFS, x))
        got = per_muscle_step_stiffness(stiff, 0.7, x, DT)
        assert got == pytest.approx(0.7 * k_act, rel=1e-6)

    def test_monotone_in_co_contraction_and_floor(self):
        model = reference_joint()
        ks = []
        for c in np.linspace(0.0, 1.0, 11):
            state = model.equilibrium_state(0.0, (c, c))
            ks.append(joint_stiffness_step(model, state, (c, c), DT))
        floor = JOINT_PARAMS.K_j + gravity_stiffness(JOINT_PARAMS, 0.0)
        assert all(k2 > k1 for k1, k2 in zip(ks, ks[1:]))
        assert all(k >= floor - 1e-12 for k in ks)


class TestJointStep:
    def test_symmetric_equilibrium_is_fixed_point(self):
        model = reference_joint()
        state = model.equilibrium_state(0.0, (0.4, 0.4))
        s = state
        for _ in range(400):
            s = joint_step(model, s, (0.4, 0.4), 0.0, DT)
        assert abs(s.theta) < 1e-9
        assert abs(s.theta_dot) < 1e-9
        assert abs(s.muscle_1.x - state.muscle_1.x) < 1e-9

    def test_passive_release_matches_linear_pendulum(self):
        model = reference_joint()
        theta0 = 0.005
        state = JointState(
            theta=theta0,
            theta_dot=0.0,
            muscle_1=MuscleState(0.0, strain_of(JOINT_PARAMS, theta0, 1)),
            muscle_2=MuscleState(0.0, strain_of(JOINT_PARAMS, theta0, 2)),
        )
        p = JOINT_PARAMS
        k_lin = p.K_j + p.m_l * p.g_acc * p.l_c
        w0 = math.sqrt(k_lin / p.J_eq)
        zeta = p.B_j / (2.0 * math.sqrt(k_lin * p.J_eq))
        wd = w0 * math.sqrt(1.0 - zeta * zeta)

        t, worst = 0.0, 0.0
        for _ in range(6000):
            state = joint_step(model, state, (0.0, 0.0), 0.0, DT)
            t += DT
            envelope = math.exp(-zeta * w0 * t)
            analytic = theta0 * envelope * (
                math.cos(wd * t) + (zeta * w0 / wd) * math.sin(wd * t)
            )
            worst = max(worst, abs(state.theta - analytic))
        assert worst < 1e-3 * theta0

    def test_passive_energy_non_increasing(self):
        model = reference_joint()
        theta0 = 0.1
        state = JointState(
            theta=theta0,
            theta_dot=0.0,
            muscle_1=MuscleState(0.0, strain_of(JOINT_PARAMS, theta0, 1)),
            muscle_2=MuscleState(0.0, strain_of(JOINT_PARAMS, theta0, 2)),
        )
        e_prev = mechanical_energy(model, state)
        for _ in range(4000):
            state = joint_step(model, state, (0.0, 0.0), 0.0, DT)
            e = mechanical_energy(model, state)
            assert e <= e_prev + 1e-12 * max(1.0, e_prev)
            e_prev = e

    def test_constant_load_reaches_static_balance(self):
        model = reference_joint()
        tau_ext = 0.05
        alpha = (0.3, 0.3)
        state = model.equilibrium_state(0.0, alpha)
        for _ in range(30000):
            state = joint_step(model, state, alpha, tau_ext, DT)
        assert abs(state.theta_dot) < 1e-7
        residual = (
            model.net_muscle_torque(state)
            + tau_ext
            - JOINT_PARAMS.K_j * state.theta
            - gravity_torque(JOINT_PARAMS, state.theta)
        )
        assert abs(residual) < 1e-6

    def test_mirror_symmetry(self):
        model = reference_joint()
        s_fwd = JointState(
            theta=0.03,
            theta_dot=-0.2,
            muscle_1=MuscleState(0.2, -0.004),
            muscle_2=MuscleState(0.6, 0.006),
        )
        s_mir = JointState(
            theta=-0.03,
            theta_dot=0.2,
            muscle_1=MuscleState(0.6, 0.006),
            muscle_2=MuscleState(0.2, -0.004),
        )
        u, tau = (0.25, 0.7), 0.04
        for _ in range(2000):
            s_fwd = joint_step(model, s_fwd, u, tau, DT)
            s_mir = joint_step(model, s_mir, (u[1], u[0]), -tau, DT)
            assert s_mir.theta == pytest.approx(-s_fwd.theta, abs=1e-12)
            assert s_mir.theta_dot == pytest.approx(-s_fwd.theta_dot, abs=1e-12)
            assert s_mir.muscle_1.x == pytest.approx(s_fwd.muscle_2.x, abs=1e-12)

    def test_velocity_guard_trips_with_diagnostics(self):
        model = reference_joint()
        state = JointState(
            theta=0.0,
            theta_dot=99.0,
            muscle_1=MuscleState(0.0, 0.0),
            muscle_2=MuscleState(0.0, 0.0),
        )
        with pytest.raises(InstabilityError) as err:
            for _ in range(100):
                state = joint_step(model, state, (0.0, 0.0), 50.0, DT)
        assert "theta_dot" in err.value.diagnostics

    def test_strain_guard_trips(self):
        model = reference_joint()  # default interval [-0.02, 0.12]
        state = model.equilibrium_state(0.0, (0.0, 0.0))
        with pytest.raises(InstabilityError, match="operating interval"):
            for _ in range(20000):
                state = joint_step(model, state, (0.0, 0.0), 1.0, DT)

    def test_parallel_units_scale_force_not_strains(self):
        m1 = reference_joint(units=1.0)
        m8 = reference_joint(units=8.0)
        s1 = m1.equilibrium_state(0.05, (0.5, 0.5))
        s8 = m8.equilibrium_state(0.05, (0.5, 0.5))
        assert s1.muscle_1.x == pytest.approx(s8.muscle_1.x, rel=1e-12)
        f1 = m1.muscle_forces(s1)
        f8 = m8.muscle_forces(s8)
        assert f8[0] == pytest.approx(8.0 * f1[0], rel=1e-12)
        k1 = joint_stiffness_step(m1, s1, (0.5, 0.5), DT)
        k8 = joint_stiffness_step(m8, s8, (0.5, 0.5), DT)
        passive = JOINT_PARAMS.K_j + gravity_stiffness(JOINT_PARAMS, 0.05)
        assert k8 - passive == pytest.approx(8.0 * (k1 - passive), rel=1e-9)
