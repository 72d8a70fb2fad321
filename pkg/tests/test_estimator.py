import math

import numpy as np
import pytest

from monest import estimator as est
from monest.core import (ErrorFunctional, MonotoneParametrization,
                         PartitionedState, RealizabilityPair, linear_phi)
from monest.plants.sine import (SetPoint, X1_STAR, build_sine_scenario,
                                sine_error, sine_parametrization, sine_plant)


def single_parametrization_cfg(K=1.0, Gamma=1.0, with_psi=True, setpoint=None):
    sp = setpoint or SetPoint()
    err = sine_error(sp)
    return est.EstimatorConfig(
        Gamma=np.array([[Gamma]]), phi=linear_phi(K), err=err,
        parametrization=sine_parametrization(sp, with_psi=with_psi))


class TestControlU:
    def test_matches_printed_sine_law(self):
        cfg = single_parametrization_cfg()
        plant = sine_plant(1.0)
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = PartitionedState([rng.uniform(-4, 4)], [rng.uniform(-2, 2)])
            th = rng.uniform(0.6, 1.4)
            u = est.control_u(plant, cfg.err, cfg.phi, np.array([th]), x, 0.0)
            psi = x.x1[0] + x.x2[0] - X1_STAR
            expected = -x.x2[0] - math.sin(th * x.x1[0]) - psi
            assert u == pytest.approx(expected, abs=1e-12)

    def test_zero_on_manifold_matched(self):
        # time-invariant psi, matched estimate, zero drift contribution
        err = ErrorFunctional(psi=lambda x, t: x.x2[0],
                              grad_x_psi=lambda x, t: np.array([0.0, 1.0]),
                              dpsi_dt=lambda x, t: 0.0, lg_psi_floor=0.5)
        plant = sine_plant(1.0)
        x = PartitionedState([0.0], [0.0])  # f1 = x2 = 0, f2 = sin(0) = 0
        u = est.control_u(plant, err, linear_phi(1.0), np.array([1.0]), x, 0.0)
        assert u == pytest.approx(0.0, abs=1e-15)

    def test_guard_floor_faults_with_witness(self):
        err = ErrorFunctional(psi=lambda x, t: x.x1[0],
                              grad_x_psi=lambda x, t: np.array([1.0, 0.0]),
                              dpsi_dt=lambda x, t: 0.0, lg_psi_floor=0.5)
        plant = sine_plant(1.0)  # g = (0, 1): L_g psi = 0 under this gradient
        with pytest.raises(est.GuardFault) as e:
            est.control_u(plant, err, linear_phi(1.0), np.array([1.0]),
                          PartitionedState([1.0], [1.0]), 0.0)
        assert e.value.value == 0.0

    def test_matched_closed_loop_decays_exactly(self):
        K = 1.0
        scenario = build_sine_scenario(theta_true=1.0, x0=(X1_STAR, 0.09),
                                       tf=5.0, h=1e-3, K=K)
        run = scenario.run()
        psi = run.columns["psi"]
        expected = psi[0] * np.exp(-K * run.times)
        assert np.max(np.abs(psi - expected)) < 1e-6


class TestFiniteForm:
    def test_zero_state_zero_estimate(self):
        cfg = single_parametrization_cfg()
        state = est.EstimatorState.fresh(np.zeros(1))
        x = PartitionedState([X1_STAR], [0.0])  # psi = 0 and Psi = 0 here
        assert est.theta_hat(state, cfg, x, 0.0)[0] == pytest.approx(0.0)

    def test_theta_I_rhs_vanishes_at_rest(self):
        cfg = single_parametrization_cfg(with_psi=False)
        plant = sine_plant(1.0)
        state = est.EstimatorState.fresh(np.zeros(1))
        x = PartitionedState([X1_STAR], [0.0])
        rhs = est.theta_I_rhs(state, cfg, plant, x, 0.0, u=0.0)
        assert abs(rhs[0]) < 1e-14

    def test_gamma_validation(self):
        sp = SetPoint()
        with pytest.raises(ValueError):
            est.EstimatorConfig(Gamma=np.array([[-1.0]]), phi=linear_phi(1.0),
                                err=sine_error(sp),
                                parametrization=sine_parametrization(sp))
        with pytest.raises(ValueError):
            est.EstimatorConfig(Gamma=np.array([[1.0]]), phi=linear_phi(1.0),
                                err=sine_error(sp))  # neither p nor atlas


class TestBrakeCorrespondence:
    """The printed braking-wheel laws are the generic finite form with the
    regressor replaced by the tracker signal (sign absorbed into alpha)."""

    def make_cfg(self, xi, xi_dot, gamma):
        err = ErrorFunctional(
            psi=lambda x, t: x.x2[0] - x.x2[1],  # slip minus observer slip
            grad_x_psi=lambda x, t: np.array([1.0, -1.0]),
            dpsi_dt=lambda x, t: 0.0, lg_psi_floor=1e-6)
        zero = lambda x, t: np.zeros(1)
        zero_m = lambda x, t: np.zeros((1, 2))
        pair = RealizabilityPair(
            Psi=zero, beta=zero_m,
            dPsi_dx1=lambda x, t: np.zeros((1, 0)),
            dPsi_dx2=zero_m, dPsi_dt=zero,
            dalpha_dx1=lambda x, t: np.zeros((1, 0)),
            dalpha_dx2=zero_m,
            dalpha_dt=lambda x, t: np.array([-xi_dot(t)]))
        p = MonotoneParametrization(
            f=lambda x, th, t: 0.0,
            alpha=lambda x, t: np.array([-xi(t)]),
            D=1.0, D1=0.5, realizability=pair)
        return est.EstimatorConfig(Gamma=np.array([[gamma]]),
                                   phi=linear_phi(1.0), err=err,
                                   parametrization=p)

    def test_output_and_update_match_printed_forms(self):
        gamma = 100.0
        xi = lambda t: 0.5 + 0.1 * math.sin(t)
        xi_dot = lambda t: 0.1 * math.cos(t)
        cfg = self.make_cfg(xi, xi_dot, gamma)
        plant_stub = sine_plant(1.0)  # m1 = 0 evaluators unused below

        class EmptyPlant:
            def f1(self, x): return np.zeros(0)
            def g1(self, x): return np.zeros(0)
            def f2(self, x, th): return np.zeros(2)
            def g2(self, x): return np.zeros(2)

        rng = np.random.default_rng(5)
        for _ in range(25):
            t = rng.uniform(0.0, 10.0)
            x = PartitionedState([], [rng.uniform(0, 1), rng.uniform(0, 1)])
            psi = x.x2[0] - x.x2[1]
            thI_generic = rng.normal()
            state = est.EstimatorState.fresh(np.array([thI_generic]))
            th = est.theta_hat(state, cfg, x, t)[0]
            # printed: theta_hat = -gamma (psi xi + theta_I) with the
            # printed integral state being minus the generic one
            assert th == pytest.approx(-gamma * (psi * xi(t) - thI_generic),
                                       rel=1e-12)
            rhs = est.theta_I_rhs(state, cfg, EmptyPlant(), x, t, u=0.3)[0]
            assert rhs == pytest.approx(-psi * (xi(t) - xi_dot(t)), rel=1e-12)


class TestNeuroCorrespondence:
    """Constant regressor, identity gain: theta1 = psi + theta_I and
    d theta_I/dt = (beta/tau) psi."""

    def test_matches_printed_forms(self):
        beta_over_tau = 2.0
        err = ErrorFunctional(
            psi=lambda x, t: x.x2[0] - x.x2[1],
            grad_x_psi=lambda x, t: np.array([1.0, -1.0]),
            dpsi_dt=lambda x, t: 0.0, lg_psi_floor=1e-9)
        zero = lambda x, t: np.zeros(1)
        zero_m = lambda x, t: np.zeros((1, 2))
        pair = RealizabilityPair(
            Psi=zero, beta=zero_m,
            dPsi_dx1=lambda x, t: np.zeros((1, 0)),
            dPsi_dx2=zero_m, dPsi_dt=zero,
            dalpha_dx1=lambda x, t: np.zeros((1, 0)),
            dalpha_dx2=zero_m, dalpha_dt=zero)
        p = MonotoneParametrization(
            f=lambda x, th, t: 0.0, alpha=lambda x, t: np.ones(1),
            D=1.0, D1=0.5, realizability=pair)
        cfg = est.EstimatorConfig(Gamma=np.eye(1), phi=linear_phi(beta_over_tau),
                                  err=err, parametrization=p)

        class EmptyPlant:
            def f1(self, x): return np.zeros(0)
            def g1(self, x): return np.zeros(0)
            def f2(self, x, th): return np.zeros(2)
            def g2(self, x): return np.zeros(2)

        x = PartitionedState([], [0.7, 0.4])
        state = est.EstimatorState.fresh(np.array([1.0]))
        assert est.theta_hat(state, cfg, x, 0.0)[0] == pytest.approx(0.3 + 1.0)
        rhs = est.theta_I_rhs(state, cfg, EmptyPlant(), x, 0.0, 0.0)
        assert rhs[0] == pytest.approx(beta_over_tau * 0.3)


class TestEffectiveUpdate:
    def test_matched_parameters_fixed_point(self):
        cfg = single_parametrization_cfg()
        plant = sine_plant(1.0)
        x = PartitionedState([-2.9], [0.05])
        psi = cfg.err.psi(x, 0.0)
        rhs = est.effective_update_rhs(cfg, plant, x, 0.0,
                                       theta_hat_value=np.array([1.0]),
                                       psi_dot=-cfg.phi(psi))
        assert abs(rhs[0]) < 1e-14

    def test_beta_zero_reduces_to_error_model_form(self):
        cfg = single_parametrization_cfg(with_psi=False)
        plant = sine_plant(1.2)
        rng = np.random.default_rng(8)
        for _ in range(30):
            x = PartitionedState([rng.uniform(-3.4, -2.6)], [rng.uniform(-1, 1)])
            th = rng.uniform(0.6, 1.4)
            psi = cfg.err.psi(x, 0.0)
            gap = math.sin(1.2 * x.x1[0]) - math.sin(th * x.x1[0])
            psi_dot = gap - cfg.phi(psi)  # the closed-loop error model
            rhs = est.effective_update_rhs(cfg, plant, x, 0.0,
                                           np.array([th]), psi_dot)
            assert rhs[0] == pytest.approx(gap * (-x.x1[0]), rel=1e-12)


class TestSwitching:
    def test_initial_sigma_inside_delta_ball(self):
        scenario = build_sine_scenario(theta_true=1.0, x0=(X1_STAR, 0.0), tf=1.0)
        x = PartitionedState([X1_STAR], [0.0])
        sigma = est.initial_sigma(scenario.atlas, x)
        assert sigma.tolist() == [1, 0]

    def test_never_entering_balls_keeps_steering(self):
        scenario = build_sine_scenario(theta_true=1.0, x0=(5.0, 5.0), tf=0.5,
                                       h=1e-3)
        run = scenario.run()
        assert run.columns["sigma"][0] == 0.0

    def test_steering_then_activation_recorded(self):
        scenario = build_sine_scenario(theta_true=1.0, x0=(0.0, 1.0), tf=20.0,
                                       h=1e-3, theta_hat0=0.8)
        run = scenario.run()
        assert run.columns["sigma"][0] == 0.0  # started outside: steering
        assert any(sig == 1 for _, _, sig, _ in run.switch_log)
        assert run.columns["sigma"][-1] == 1.0

    def test_toggle_continuity_through_forced_excursions(self):
        scenario = build_sine_scenario(theta_true=1.3, x0=(X1_STAR, 0.0),
                                       tf=30.0, h=1e-3, theta_hat0=0.65,
                                       hop_amp=0.5, hop_period=6.0)
        run = scenario.run()
        assert len(run.switch_log) >= 3
        assert max(j for *_, j in run.switch_log) < 1e-6
        assert run.final_theta_err < 1e-6

    def test_multi_activation_is_a_fault(self):
        scenario = build_sine_scenario(theta_true=1.0, x0=(X1_STAR, 0.0), tf=1.0)
        state = est.EstimatorState.fresh(np.zeros(1), n_balls=2)
        state.sigma[:] = [1, 1]
        with pytest.raises(est.AtlasFault):
            state.active_ball()


class TestSteeringLaw:
    def setup_method(self):
        self.err = sine_error(SetPoint())

    def test_on_manifold_sign_zero_convention(self):
        x = PartitionedState([X1_STAR - 1.0], [1.0])  # psi = 0
        assert est.steering_u1(self.err, x) == pytest.approx(-1.0)

    def test_printed_example_value(self):
        x = PartitionedState([0.0], [1.0])
        # psi = 0 + 1 + 2.985 = 3.985; u1 = -1 - 3.985 - 1
        assert est.steering_u1(self.err, x) == pytest.approx(-5.985)

    def test_sign_term_flips_with_psi(self):
        x_pos = PartitionedState([0.0], [1.0])
        x_neg = PartitionedState([-6.0], [1.0])  # psi = -6 + 1 + 2.985 < 0
        u_pos = est.steering_u1(self.err, x_pos)
        u_neg = est.steering_u1(self.err, x_neg)
        psi_pos = self.err.psi(x_pos, 0.0)
        psi_neg = self.err.psi(x_neg, 0.0)
        assert u_pos == pytest.approx(-1.0 - psi_pos - 1.0)
        assert u_neg == pytest.approx(-1.0 - psi_neg + 1.0)


class TestMatchedInvariance:
    def test_matched_start_stays_on_manifold(self):
        scenario = build_sine_scenario(theta_true=1.0, x0=(X1_STAR, 0.0),
                                       tf=10.0, h=1e-3)
        run = scenario.run()
        assert np.max(np.abs(run.columns["psi"])) < 1e-9
        assert run.final_theta_err < 1e-9
