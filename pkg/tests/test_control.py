"""Cascaded controller: output map, Jacobian, inner solver, PI, limits."""

import math

import numpy as np
import pytest

from antmuscle.control import (
    CommandLimits,
    ControlMode,
    ControlRefs,
    ControlTargets,
    Controller,
    ControllerConfig,
    ImpedanceGains,
    PIState,
    apply_preload,
    command_limits,
    design_pi_gains,
    inner_solve,
    outer_impedance,
    output_jacobian,
    pi_update,
    plant_outputs,
)
from antmuscle.errors import ConfigurationError
from antmuscle.joint import gravity_stiffness, joint_stiffness_step
from antmuscle.presets import JOINT_PARAMS, reference_joint

DT = 5e-4


def random_states(model, rng, n):
    """Plausible controller-side states: random pose, random settled
    deformations perturbed off equilibrium."""
    out = []
    for _ in range(n):
        theta = rng.uniform(-0.09, 0.09)
        a = tuple(rng.uniform(0.05, 0.95, size=2))
        st = model.equilibrium_state(theta, a)
        out.append((st, a))
    return out


class TestOuterImpedance:
    GAINS = ImpedanceGains(K_imp=10.0, D_imp=1.0)

    def test_zero_error_at_gravity_reference(self):
        t = outer_impedance(0.0, 0.0, 0.0, 0.0, self.GAINS, JOINT_PARAMS)
        assert t == 0.0

    def test_position_error_scales_by_gain(self):
        t = outer_impedance(0.1, 0.0, 0.0, 0.0, self.GAINS, JOINT_PARAMS)
        assert t == pytest.approx(1.0)

    def test_gravity_term_alone(self):
        from antmuscle.joint import gravity_torque

        theta = 0.3
        t = outer_impedance(theta, 0.0, theta, 0.0, self.GAINS, JOINT_PARAMS)
        assert t == pytest.approx(gravity_torque(JOINT_PARAMS, theta))


class TestPlantOutputs:
    def test_symmetric_pair_gives_zero_torque(self):
        model = reference_joint()
        st = model.equilibrium_state(0.0, (0.6, 0.6))
        T, _ = plant_outputs(model, (0.6, 0.6), st, DT)
        assert T == pytest.approx(0.0, abs=1e-12)

    def test_zero_activation_gives_zero_outputs(self):
        model = reference_joint()
        st = model.equilibrium_state(0.0, (0.0, 0.0))
        assert plant_outputs(model, (0.0, 0.0), st, DT) == (0.0, 0.0)

    def test_active_stiffness_is_total_minus_passive(self):
        model = reference_joint()
        alpha = (0.7, 0.4)
        st = model.equilibrium_state(0.05, alpha)
        _, K_act = plant_outputs(model, alpha, st, DT)
        total = joint_stiffness_step(model, st, alpha, DT)
        passive = JOINT_PARAMS.K_j + gravity_stiffness(JOINT_PARAMS, st.theta)
        assert K_act == pytest.approx(total - passive, rel=1e-12)


class TestOutputJacobian:
    def test_torque_row_is_linear_in_activation(self):
        from antmuscle.muscle import base_force

        model = reference_joint()
        st = model.equilibrium_state(0.02, (0.5, 0.5))
        (jt1, jt2), _ = output_jacobian(model, (0.5, 0.5), st, DT)
        r = JOINT_PARAMS.r
        assert jt1 == pytest.approx(r * base_force(model.muscle_1.coeffs, st.muscle_1.x))
        assert jt2 == pytest.approx(-r * base_force(model.muscle_2.coeffs, st.muscle_2.x))

    def test_matches_finite_differences_on_100_states(self):
        model = reference_joint()
        rng = np.random.default_rng(5)
        h = 1e-6
        for st, alpha in random_states(model, rng, 100):
            J = output_jacobian(model, alpha, st, DT)
            for j in range(2):
                da = [0.0, 0.0]
                da[j] = h
                yp = plant_outputs(model, (alpha[0] + da[0], alpha[1] + da[1]), st, DT)
                ym = plant_outputs(model, (alpha[0] - da[0], alpha[1] - da[1]), st, DT)
                for i in range(2):
                    fd = (yp[i] - ym[i]) / (2.0 * h)
                    scale = max(1e-9, abs(J[i][j]))
                    assert abs(fd - J[i][j]) / scale < 1e-6

    def test_stiffness_sensitivity_at_zero_activation(self):
        from antmuscle.muscle import base_force_derivative

        model = reference_joint()
        st = model.equilibrium_state(0.03, (0.0, 0.0))
        _, (jk1, jk2) = output_jacobian(model, (0.0, 0.0), st, DT)
        p = JOINT_PARAMS
        exp1 = p.r * p.xi * abs(base_force_derivative(model.muscle_1.coeffs, st.muscle_1.x))
        exp2 = p.r * p.xi * abs(base_force_derivative(model.muscle_2.coeffs, st.muscle_2.x))
        assert jk1 == pytest.approx(exp1, rel=1e-12)
        assert jk2 == pytest.approx(exp2, rel=1e-12)


class TestInnerSolve:
    def test_fixed_point_converges_immediately(self):
        model = reference_joint()
        alpha = (0.55, 0.35)
        st = model.equilibrium_state(0.01, alpha)
        T, K_act = plant_outputs(model, alpha, st, DT)
        K_des = K_act + JOINT_PARAMS.K_j + gravity_stiffness(JOINT_PARAMS, st.theta)
        res = inner_solve(model, ControlTargets(T, K_des), st, alpha, DT)
        assert res.iterations == 1
        assert res.feasible
        assert res.alpha[0] == pytest.approx(alpha[0], abs=1e-9)

    def test_zero_torque_target_yields_pure_co_contraction(self):
        model = reference_joint()
        st = model.equilibrium_state(0.0, (0.5, 0.5))
        passive = JOINT_PARAMS.K_j + gravity_stiffness(JOINT_PARAMS, 0.0)
        _, k_mid = plant_outputs(model, (0.5, 0.5), st, DT)
        res = inner_solve(
            model, ControlTargets(0.0, passive + k_mid), st, (0.3, 0.3), DT
        )
        assert res.feasible
        # a symmetric warm start stays exactly symmetric
        assert res.alpha[0] == res.alpha[1]
        # an asymmetric warm start still lands on a near-zero-torque pair
        res2 = inner_solve(
            model, ControlTargets(0.0, passive + k_mid), st, (0.3, 0.35), DT
        )
        T2, _ = plant_outputs(model, res2.alpha, st, DT)
        assert abs(T2) <= 1e-3

    def test_recovers_grid_sampled_feasible_targets(self):
        model = reference_joint()
        st = model.equilibrium_state(0.0, (0.5, 0.5))
        passive = JOINT_PARAMS.K_j + gravity_stiffness(JOINT_PARAMS, 0.0)
        rng = np.random.default_rng(17)
        for _ in range(100):
            alpha = tuple(rng.uniform(0.0, 1.0, size=2))
            T, K_act = plant_outputs(model, alpha, st, DT)
            res = inner_solve(
                model, ControlTargets(T, K_act + passive), st, (0.5, 0.5), DT
            )
            T2, K2 = plant_outputs(model, res.alpha, st, DT)
            assert abs(T2 - T) <= 1e-3
            assert abs(K2 - K_act) <= 1e-2

    def test_unreachable_target_is_flagged_best_effort(self):
        model = reference_joint()
        st = model.equilibrium_state(0.0, (0.5, 0.5))
        res = inner_solve(model, ControlTargets(0.0, 500.0), st, (0.5, 0.5), DT)
        assert not res.feasible
        assert 0.0 <= res.alpha[0] <= 1.0 and 0.0 <= res.alpha[1] <= 1.0


class TestPIUpdate:
    GAINS = (0.2, 1.5, 0.01, 0.05)

    def test_zero_error_zero_output(self):
        pi = PIState(gains=self.GAINS)
        dc, db, _ = pi_update(pi, 0.0, 0.0, 1e-3)
        assert (dc, db) == (0.0, 0.0)

    def test_constant_error_grows_affinely(self):
        pi = PIState(gains=self.GAINS, bounds=(1e9, 1e9))
        e = 0.3
        n = 250
        dt = 1e-3
        db = None
        for _ in range(n):
            _, db, pi = pi_update(pi, e, 0.0, dt)
        k_p, k_i = self.GAINS[0], self.GAINS[1]
        assert db == pytest.approx(k_p * e + k_i * e * n * dt, rel=1e-9)

    def test_integrator_frozen_when_saturated_into_error(self):
        pi = PIState(gains=self.GAINS, bounds=(1e9, 1e9))
        _, _, pi = pi_update(pi, 0.5, 0.0, 1e-3, freeze_T_pos=True)
        assert pi.integrators[0] == 0.0
        # opposite-direction error still integrates
        _, _, pi = pi_update(pi, -0.5, 0.0, 1e-3, freeze_T_pos=True)
        _, _, pi = pi_update(pi, -0.5, 0.0, 1e-3, freeze_T_pos=True)
        assert pi.integrators[0] < 0.0

    def test_integrators_bounded_for_bounded_errors(self):
        pi = PIState(gains=self.GAINS, bounds=(0.4, 0.4))
        rng = np.random.default_rng(2)
        for _ in range(5000):
            _, _, pi = pi_update(pi, rng.uniform(-5, 5), rng.uniform(-50, 50), 1e-3)
            assert abs(self.GAINS[1] * pi.integrators[0]) <= 0.4 + 1e-12
            assert abs(self.GAINS[3] * pi.integrators[1]) <= 0.4 + 1e-12


class TestGainDesign:
    def test_doubling_sensitivity_halves_gains(self):
        g1 = design_pi_gains((0.4, 0.25), 3.0, 1.0, 1.2, 0.04)
        g2 = design_pi_gains((0.8, 0.5), 3.0, 1.0, 1.2, 0.04)
        for a, b in zip(g1, g2):
            assert b == pytest.approx(0.5 * a, rel=1e-12)

    def test_designed_torque_loop_settles_without_overshoot(self):
        # closed loop on the design model: integrator + drive lag
        s_d = 0.35
        tau_a = 0.04
        k_p, k_i, _, _ = design_pi_gains((s_d, 1.0), 3.0, 1.0, 1.2, tau_a)
        dt = 1e-5
        y = 0.0
        lag = 0.0
        integ = 0.0
        r = 1.0
        peak = 0.0
        for _ in range(int(2.0 / dt)):
            e = r - y
            integ += e * dt
            v = k_p * e + k_i * integ
            lag += dt * (v - lag) / tau_a
            y = s_d * lag
            peak = max(peak, y)
        assert abs(y - r) < 1e-3
        assert peak <= 1.05 * r

    def test_slower_stiffness_loop(self):
        k_pT, k_iT, k_pK, k_iK = design_pi_gains((1.0, 1.0), 3.0, 1.0, 1.2, 0.04)
        assert k_iK < k_iT

    def test_zero_sensitivity_rejected(self):
        with pytest.raises(ConfigurationError, match="uncontrollable"):
            design_pi_gains((0.0, 1.0), 3.0, 1.0, 1.2, 0.04)


class TestCommandLimits:
    LIMITS = CommandLimits(slew_max=10.0)

    def test_inside_limits_unchanged(self):
        out = command_limits(self.LIMITS, (0.4, 0.6), (0.4, 0.6), 1e-3)
        assert out == (0.4, 0.6)

    def test_slew_limit(self):
        out = command_limits(self.LIMITS, (1.0, 0.0), (0.0, 0.0), 1e-3)
        assert out[0] == pytest.approx(0.01)

    def test_saturation(self):
        out = command_limits(self.LIMITS, (-0.2, 1.4), (0.0, 1.0), 1.0)
        assert out == (0.0, 1.0)


class TestPreload:
    def test_raises_co_contraction_minimally(self):
        model = reference_joint()
        a1, a2 = apply_preload(model, 0.0, (0.0, 0.0))
        assert a1 == a2  # bias preserved
        assert a1 > 0.0
        f1, f2 = model.muscle_forces(model.equilibrium_state(0.0, (a1, a2)))
        assert f1 == pytest.approx(JOINT_PARAMS.F_pre, rel=1e-6)

    def test_no_change_when_already_taut(self):
        model = reference_joint()
        assert apply_preload(model, 0.0, (0.5, 0.5)) == (0.5, 0.5)


class TestControllerTick:
    def test_direct_mode_fixed_point(self):
        model = reference_joint()
        alpha = (0.5, 0.4)
        st = model.equilibrium_state(0.0, alpha)
        T, K_act = plant_outputs(model, alpha, st, DT)
        K_des = K_act + JOINT_PARAMS.K_j + gravity_stiffness(JOINT_PARAMS, 0.0)
        ctl = Controller(model, ControllerConfig(fb_enabled=False))
        ctl._warm = alpha
        u1, u2, diag = ctl.tick(ControlRefs(T_des=T, K_des=K_des), st, DT)
        assert u1 == pytest.approx(alpha[0], abs=1e-6)
        assert u2 == pytest.approx(alpha[1], abs=1e-6)
        assert diag.feasible

    def test_impedance_mode_at_rest_needs_no_bias(self):
        model = reference_joint()
        st = model.equilibrium_state(0.0, (0.5, 0.5))
        _, K_act = plant_outputs(model, (0.5, 0.5), st, DT)
        K_des = K_act + JOINT_PARAMS.K_j + gravity_stiffness(JOINT_PARAMS, 0.0)
        cfg = ControllerConfig(mode=ControlMode.IMPEDANCE, fb_enabled=False)
        ctl = Controller(model, cfg)
        u1, u2, diag = ctl.tick(
            ControlRefs(K_des=K_des, theta_r=0.0, theta_dot_r=0.0), st, DT
        )
        b = 0.5 * (u1 - u2)
        assert abs(b) < 1e-6
        assert diag.T_des == 0.0
