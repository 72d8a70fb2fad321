import math

import numpy as np
import pytest

from monest import analysis
from monest.core import PartitionedState, linear_phi
from monest.plants.sine import SetPoint, sine_parametrization, sine_plant


class TestPEGramian:
    def test_sin_cos_closed_form(self):
        dt = 2.0 * math.pi / 1024.0
        t = np.arange(8192) * dt
        alpha = np.stack([np.sin(t), np.cos(t)], axis=1)
        gram = analysis.pe_gramian(t, alpha, 2.0 * math.pi)
        assert np.max(np.abs(gram.min_eigs - math.pi)) < 1e-6
        assert gram.delta_est == pytest.approx(math.pi, abs=1e-6)

    def test_constant_scalar_signal(self):
        t = np.linspace(0.0, 10.0, 1001)
        a = 3.0
        gram = analysis.pe_gramian(t, np.full((1001, 1), a), window=2.0)
        assert gram.delta_est == pytest.approx(2.0 * a * a, rel=1e-9)

    def test_zero_signal_not_exciting(self):
        t = np.linspace(0.0, 10.0, 101)
        gram = analysis.pe_gramian(t, np.zeros((101, 2)), window=1.0)
        assert gram.delta_est == 0.0

    def test_gramians_symmetric_psd(self):
        rng = np.random.default_rng(1)
        t = np.linspace(0.0, 20.0, 2001)
        alpha = np.stack([np.sin(t) + 0.1 * rng.standard_normal(len(t)),
                          np.cos(2 * t)], axis=1)
        dt = t[1] - t[0]
        m = int(round(2.0 / dt))
        inc = 0.5 * dt * (np.einsum("ni,nj->nij", alpha, alpha)[1:]
                          + np.einsum("ni,nj->nij", alpha, alpha)[:-1])
        cum = np.concatenate([np.zeros((1, 2, 2)), np.cumsum(inc, axis=0)])
        grams = cum[m:] - cum[:-m]
        for G in grams[::50]:
            assert np.max(np.abs(G - G.T)) <= 1e-12
            assert np.min(np.linalg.eigvalsh(G)) >= -1e-12

    def test_window_validation(self):
        t = np.linspace(0.0, 1.0, 11)
        with pytest.raises(ValueError):
            analysis.pe_gramian(t, np.ones((11, 1)), window=2.0)
        with pytest.raises(ValueError):
            analysis.pe_gramian(np.array([0.0, 0.1, 0.3]), np.ones((3, 1)), 0.2)


class TestPECompleteGramian:
    def test_linear_plant_coincides_with_plain_gramian(self):
        # f(x, theta) = theta * x1 with alpha = x1 and beta = 0.
        from monest.core import MonotoneParametrization, RealizabilityPair
        zero = lambda x, t: np.zeros(1)
        zero_m = lambda x, t: np.zeros((1, 1))
        pair = RealizabilityPair(Psi=zero, beta=zero_m)
        p = MonotoneParametrization(
            f=lambda x, th, t: float(np.atleast_1d(th)[0]) * x.x1[0],
            alpha=lambda x, t: np.array([x.x1[0]]),
            D=1.0, D1=1.0, realizability=pair,
            df_dtheta=lambda x, th, t: np.array([x.x1[0]]))

        class LinearPlant:
            df2_dtheta = None
            def f2(self, x, th):
                return np.array([float(np.atleast_1d(th)[0]) * x.x1[0]])
            def true_theta(self):
                return np.array([1.0])

        t = np.linspace(0.0, 10.0, 501)
        xs = [PartitionedState([math.sin(ti) + 2.0], [0.0]) for ti in t]
        alpha = np.array([[x.x1[0]] for x in xs])
        th_hats = np.full((501, 1), 0.7)
        g1 = analysis.pe_gramian(t, alpha, window=2.0)
        g2 = analysis.pe_complete_gramian(t, xs, th_hats, LinearPlant(), p,
                                          window=2.0)
        assert np.max(np.abs(g1.min_eigs - g2.min_eigs)) < 1e-9

    def test_zero_excitation_gives_zero(self):
        p = sine_parametrization(SetPoint())
        plant = sine_plant(1.0)
        t = np.linspace(0.0, 5.0, 201)
        xs = [PartitionedState([0.0], [0.0]) for _ in t]  # x1 = 0: alpha = 0
        th_hats = np.full((201, 1), 1.0)
        gram = analysis.pe_complete_gramian(t, xs, th_hats, plant, p, window=1.0)
        assert gram.delta_est == pytest.approx(0.0, abs=1e-12)


class TestPerformanceBounds:
    def test_linear_phi_closed_form(self):
        phi = linear_phi(1.0)
        rep = analysis.performance_bounds(phi, psi0=1.0, theta_err0=[0.0],
                                          Gamma=[[1.0]], D=1.0)
        assert rep.l2_phi_bound == pytest.approx(1.0)
        assert rep.linf_psi_bound == pytest.approx(1.0, abs=1e-9)

    def test_zero_initial_data_zero_bounds(self):
        phi = linear_phi(2.0)
        rep = analysis.performance_bounds(phi, 0.0, [0.0], [[1.0]], D=1.0)
        assert rep.l2_phi_bound == 0.0
        assert rep.linf_psi_bound == 0.0

    def test_lambda_inverse_property_log_grid(self):
        phi = linear_phi(2.0)
        for d in np.logspace(-3, 3, 13):
            lam = analysis.lambda_inverse(phi, d)
            assert abs(phi.Q(lam) - d) <= 1e-10 * max(1.0, d)

    def test_lambda_closed_form_for_linear_phi(self):
        K = 4.0
        phi = linear_phi(K)
        for d in (0.1, 1.0, 10.0):
            assert analysis.lambda_inverse(phi, d) == pytest.approx(
                math.sqrt(2.0 * d / K), rel=1e-10)

    def test_evaluate_bounds_fills_observed(self):
        phi = linear_phi(1.0)
        t = np.linspace(0.0, 20.0, 5001)
        psi = np.exp(-t)
        psi_dot = -np.exp(-t)
        rep = analysis.performance_bounds(phi, 1.0, [0.0], [[1.0]], 1.0)
        analysis.evaluate_bounds(rep, t, psi, psi_dot, phi)
        # int exp(-2t) = 0.5 observed on both L2 norms; sup |psi| = 1
        assert rep.observed_l2_phi == pytest.approx(0.5, abs=1e-4)
        assert rep.observed_linf_psi == pytest.approx(1.0)
        assert rep.satisfied is True

    def test_invalid_D(self):
        with pytest.raises(ValueError):
            analysis.performance_bounds(linear_phi(1.0), 1.0, [0.0], [[1.0]], 0.0)


class TestEnvelope:
    def test_matched_parameters_pure_exponential(self):
        t = np.linspace(0.0, 5.0, 11)
        env = analysis.exp_envelope(2.0, K=1.0, D=1.0, Gamma=[[1.0]],
                                    theta_err0=[0.0], t=t)
        assert np.allclose(env, 2.0 * np.exp(-t))

    def test_initial_value_dominates_psi0(self):
        env0 = analysis.exp_envelope(1.5, 1.0, 1.0, [[1.0]], [0.4], 0.0)
        assert env0 == pytest.approx(1.5 + 0.5 * 0.4)
        assert env0 >= 1.5

    def test_margin_counts_violations(self):
        t = np.linspace(0.0, 5.0, 501)
        psi = 0.5 * np.exp(-t)
        res = analysis.envelope_margin(t, psi, K=1.0, D=1.0, Gamma=[[1.0]],
                                       theta_err0=[0.0])
        assert res["violations"] == 0
        res_bad = analysis.envelope_margin(t, 2.0 * np.exp(-0.5 * t), 1.0, 1.0,
                                           [[1.0]], [0.0])
        assert res_bad["violations"] > 0


class TestLyapunovMonitor:
    def test_matched_run_flat(self):
        t = np.linspace(0.0, 1.0, 101)
        th = np.full((101, 1), 0.8)
        out = analysis.lyapunov_monitor(t, th, [[2.0]], [0.8])
        assert out["max_increase"] <= 1e-12
        assert out["final_err"] == 0.0
        assert not out["exit_omega"]

    def test_segment_gating_skips_jumps(self):
        t = np.linspace(0.0, 1.0, 11)
        theta_true = np.where(t < 0.5, 1.0, 2.0)[:, None]
        th = np.full((11, 1), 1.0)
        seg = (t >= 0.5).astype(int)
        out = analysis.lyapunov_monitor(t, th, [[1.0]], theta_true,
                                        segment_ids=seg)
        assert out["max_increase"] <= 0.0

    def test_exit_omega_detection(self):
        from monest.core import Box
        t = np.linspace(0.0, 1.0, 5)
        th = np.array([[0.8], [0.9], [1.5], [0.9], [0.8]])
        out = analysis.lyapunov_monitor(t, th, [[1.0]], [0.8],
                                        theta_domain=Box([0.6], [1.4]))
        assert out["exit_omega"]


class TestExpRateFit:
    def test_exact_exponential(self):
        t = np.linspace(0.0, 5.0, 501)
        fit = analysis.exp_rate_fit(t, 0.7 * np.exp(-2.0 * t))
        assert fit["lambda_est"] == pytest.approx(2.0, abs=1e-6)
        assert fit["r_squared"] > 0.9999

    def test_constant_error(self):
        t = np.linspace(0.0, 5.0, 101)
        fit = analysis.exp_rate_fit(t, np.full(101, 0.3))
        assert fit["lambda_est"] == pytest.approx(0.0, abs=1e-12)

    def test_too_few_samples_faults(self):
        with pytest.raises(ValueError):
            analysis.exp_rate_fit(np.linspace(0, 1, 5), np.exp(-np.linspace(0, 1, 5)))
