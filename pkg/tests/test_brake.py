import numpy as np
import pytest

from monest.estimator import GuardFault
from monest.plants.brake import (BrakeGains, BrakeParams, BrakeState,
                                 REFERENCE_PROFILE, RoadProfile,
                                 alpha_regressor, brake_experiment, brake_rhs,
                                 build_brake_scenario, control_torque,
                                 domination_bound, lugre_force, optimal_slip,
                                 xi_rhs, _force_at_slip, _lugre)

P = BrakeParams()


@pytest.fixture(scope="module")
def adaptive_run():
    return build_brake_scenario(mode="adaptive").run(record_stride=5)


def make_state(x1, x2, x3, **kw):
    return BrakeState(x1=x1, x2=x2, x3=x3,
                      x3_hat=kw.get("x3_hat", x3),
                      xi=kw.get("xi", alpha_regressor(x1, x2, x3, P)),
                      theta_I=kw.get("theta_I", 0.0),
                      s=kw.get("s", 0.0))


class TestLugreForce:
    def test_vanishes_with_slip(self):
        st = make_state(20.0, 60.0, 1e-9)
        assert abs(lugre_force(P.Fn, st, 1.0, P)) < 1e-3 * P.Fn

    def test_monotone_in_theta(self):
        st = make_state(20.0, 60.0, 0.1)
        assert lugre_force(P.Fn, st, 1.2, P) > lugre_force(P.Fn, st, 0.6, P)
        thetas = np.linspace(0.1, 2.0, 20)
        forces = [lugre_force(P.Fn, st, th, P) for th in thetas]
        assert np.all(np.diff(forces) > 0)

    def test_sign_antisymmetric_in_wheel_speed(self):
        st_f = make_state(20.0, 60.0, 0.1)
        st_b = make_state(20.0, -60.0, 0.1)
        assert lugre_force(P.Fn, st_f, 1.0, P) == pytest.approx(
            -lugre_force(P.Fn, st_b, 1.0, P))

    def test_slip_domain_fault(self):
        with pytest.raises(GuardFault):
            lugre_force(P.Fn, make_state(20.0, 60.0, 0.0), 1.0, P)
        with pytest.raises(GuardFault):
            lugre_force(P.Fn, make_state(20.0, 60.0, 1.1), 1.0, P)


class TestOptimalSlip:
    def test_interior_max_beats_fixed_targets(self):
        x3s = optimal_slip(0.6, 30.0, P)
        assert 0.0 < x3s < 1.0
        f_star = _force_at_slip(0.6, 30.0, x3s, P)
        assert f_star >= _force_at_slip(0.6, 30.0, 0.1, P)
        assert f_star >= _force_at_slip(0.6, 30.0, 0.2, P)

    @pytest.mark.parametrize("theta", [0.3, 0.7, 1.5])
    def test_matches_dense_grid_oracle(self, theta):
        x1 = 25.0
        grid = np.linspace(1e-4, 0.999, 1000)
        forces = [_force_at_slip(theta, x1, g, P) for g in grid]
        oracle = grid[int(np.argmax(forces))]
        assert abs(optimal_slip(theta, x1, P) - oracle) < 2e-3

    def test_monotone_profile_returns_boundary(self):
        # nearly constant Stribeck factor at crawling speed: force is
        # increasing over the whole probe interval
        x3s = optimal_slip(1.0, 0.1, P)
        assert x3s > 0.99

    def test_warm_start_agrees_with_cold(self):
        cold = optimal_slip(1.1, 22.0, P)
        warm = optimal_slip(1.1, 22.0, P, guess=cold + 0.01)
        assert abs(warm - cold) < 1e-5

    def test_theta_domain_fault(self):
        with pytest.raises(GuardFault):
            optimal_slip(0.0, 20.0, P)
        with pytest.raises(GuardFault):
            optimal_slip(2.5, 20.0, P)


class TestBrakeRhs:
    def test_setpoint_consistency_matched(self):
        theta = 0.8
        x1 = 25.0
        x3s = optimal_slip(theta, x1, P)
        st = make_state(x1, x1 * (1 - x3s) / P.r, x3s)
        F = _lugre(P.Fn, st.x2, st.x3, theta, P)
        u = control_torque(st, x3s, F, P)
        gains = BrakeGains(K_xi=20.0)
        dx = brake_rhs(st, u, theta, P, gains, theta_hat=theta)
        assert abs(dx[2]) < 1e-12  # slip stationary at the matched set-point

    def test_zero_force_zero_wheel_accel(self):
        st = make_state(20.0, 60.0, 1e-7)
        dx = brake_rhs(st, 0.0, 1.0, P, BrakeGains(K_xi=20.0), theta_hat=1.0)
        assert abs(dx[0]) < 1e-3  # dx1 ~ -F/m with F ~ 0
        assert abs(dx[1]) < 1.0   # dx2 = (F r - 0)/J with F ~ 0

    def test_matched_observer_error_is_stationary(self):
        st = make_state(25.0, 70.0, 0.12)
        u = 200.0
        dx = brake_rhs(st, u, 0.9, P, BrakeGains(K_xi=20.0), theta_hat=0.9)
        # psi = 0 and F_hat = F_true: dpsi/dt = dx3 - dx3_hat = 0
        assert dx[2] - dx[3] == pytest.approx(0.0, abs=1e-12)

    def test_velocity_floor_guard(self):
        st = make_state(3.0, 9.0, 0.1)
        with pytest.raises(GuardFault):
            brake_rhs(st, 0.0, 1.0, P, BrakeGains(K_xi=20.0), theta_hat=1.0)


class TestXiTracker:
    def test_equilibrium_with_frozen_state(self):
        st = make_state(25.0, 70.0, 0.12)  # xi initialized at alpha
        gains = BrakeGains(K_xi=20.0)
        assert xi_rhs(st, 0.0, P, gains) == pytest.approx(0.0, abs=1e-12)

    def test_tracking_error_within_eps0_on_run(self, adaptive_run):
        c = adaptive_run.columns
        tail = adaptive_run.times > 0.5
        assert np.max(np.abs(c["xi_err"][tail])) <= 0.001

    def test_halving_gain_degrades_tracking(self):
        default_K = 2.0 * domination_bound(BrakeParams())
        errs = {}
        for K in (default_K, 0.5 * default_K):
            run = build_brake_scenario(mode=0.15, K_xi=K, tf_max=1.5,
                                       h=1e-4).run(record_stride=10)
            tail = run.times > 0.5
            errs[K] = np.max(np.abs(run.columns["xi_err"][tail]))
        assert errs[0.5 * default_K] > errs[default_K]


class TestRoadProfile:
    def test_reference_profile_lookup(self):
        assert REFERENCE_PROFILE.theta_at(0.0) == 0.3
        assert REFERENCE_PROFILE.theta_at(8.0) == 0.3
        assert REFERENCE_PROFILE.theta_at(8.0001) == 1.3
        assert REFERENCE_PROFILE.theta_at(45.0) == 0.6

    def test_json_round_trip(self):
        data = [{"s_end": 5.0, "theta": 0.5}, {"s_end": None, "theta": 1.0}]
        prof = RoadProfile.from_json(data)
        assert prof.theta_at(4.0) == 0.5
        assert prof.theta_at(6.0) == 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            RoadProfile(((5.0, 0.5), (3.0, 1.0), (None, 0.6)))
        with pytest.raises(ValueError):
            RoadProfile(((5.0, 2.5), (None, 0.6)))
        with pytest.raises(ValueError):
            RoadProfile.from_json([{"s_end": 5.0, "theta": 0.5, "mu": 1.0}])


class TestExperiment:
    def test_reference_scenario_distance_scale(self, adaptive_run):
        assert 50.0 < adaptive_run.distance < 60.0
        assert not adaptive_run.diverged
        # run truncated by the stop event at the velocity floor
        assert adaptive_run.states[-1, 0] == pytest.approx(5.0, abs=1e-4)

    def test_energy_sanity_velocity_strictly_decreases(self, adaptive_run):
        x1 = adaptive_run.states[:, 0]
        F = adaptive_run.columns["Fs"]
        active = (F[:-1] > 0) & (adaptive_run.states[:-1, 1] > 0)
        assert np.all(np.diff(x1)[active] < 0)

    def test_matched_single_segment_modes_coincide(self):
        profile = RoadProfile(((None, 0.8),))
        theta = 0.8
        # the force-optimal slip drifts slowly with speed, so the natural
        # constant benchmark is the optimum at the mid-run operating point
        x3s = optimal_slip(theta, 20.0, P)
        common = dict(profile=profile, theta_I0=-theta / 100.0,
                      record_stride=20)
        fixed = brake_experiment(mode=x3s, **common)
        adaptive = brake_experiment(mode="adaptive", **common)
        assert abs(fixed["distance"] - adaptive["distance"]) < 0.1

    def test_mode_validation(self):
        with pytest.raises(ValueError):
            build_brake_scenario(mode=1.5)
        with pytest.raises(ValueError):
            build_brake_scenario(x1_0=2.0)
        with pytest.raises(ValueError):
            build_brake_scenario(feedforward="psychic")

    def test_estimator_tracks_each_segment(self, adaptive_run):
        t, c = adaptive_run.times, adaptive_run.columns
        seg = c["segment"].astype(int)
        for sg in np.unique(seg):
            m = seg == sg
            theta_seg = c["theta_road"][m][0]
            t_check = min(t[m][0] + 0.5, t[m][-1])
            mm = m & (t >= t_check)
            if not mm.any():
                mm = m & (t == t[m][-1])
            rel = np.abs(c["theta_hat"][mm] - theta_seg) / theta_seg
            assert np.max(rel) < 0.05

    def test_p2_within_segments(self, adaptive_run):
        c = adaptive_run.columns
        seg = c["segment"]
        same = seg[1:] == seg[:-1]
        assert np.max(np.diff(c["V"])[same]) <= 1e-6

    def test_printed_feedforward_variant_runs(self):
        # the certainty-equivalence feedforward stays available; road steps
        # then collapse the slip while the estimate re-learns
        run = build_brake_scenario(mode=0.2, feedforward="estimate",
                                   tf_max=1.0).run(record_stride=20)
        assert run.states[-1, 6] > 10.0  # traveled some distance, no fault

    def test_max_slip_stays_inside_domination_box(self, adaptive_run):
        assert np.max(adaptive_run.states[:, 2]) < 0.4

    def test_final_estimate_monitor(self, adaptive_run):
        from monest.analysis import lyapunov_monitor
        c = adaptive_run.columns
        out = lyapunov_monitor(adaptive_run.times, c["theta_hat"][:, None],
                               [[100.0]], c["theta_road"][:, None],
                               segment_ids=c["segment"])
        assert out["max_increase"] <= 1e-6
        final_theta = c["theta_road"][-1]
        assert out["final_err"] / final_theta < 0.05


class TestBrakeMonotoneContract:
    def test_transverse_nonlinearity_sampled_monotone(self):
        """The slip-equation drift is monotone in theta against the
        regressor direction over the operational box."""
        from monest.core import (Box, MonotoneParametrization,
                                 RealizabilityPair, check_monotonicity)

        def f(x, th, t):
            x1, x2, x3 = x.x2[0], x.x2[1], x.x2[2]
            A = (1.0 - x3) / P.m + P.A_coef
            return -A * _lugre(P.Fn, x2, x3, float(np.atleast_1d(th)[0]), P) / x1

        def alpha(x, t):
            x1, x2, x3 = x.x2[0], x.x2[1], x.x2[2]
            return np.array([-alpha_regressor(x1, x2, x3, P)])

        zero = lambda x, t: np.zeros(1)
        zero_m = lambda x, t: np.zeros((1, 3))
        pair = RealizabilityPair(Psi=zero, beta=zero_m)
        p = MonotoneParametrization(f=f, alpha=alpha, D=P.Fn, D1=1e-6,
                                    realizability=pair)
        rep = check_monotonicity(
            p, Box([6.0, 10.0, 0.02], [40.0, 120.0, 0.4]),
            Box([0.1], [2.0]), n_samples=4000, m1=0, seed=4)
        assert rep.holds
        assert rep.D1_est > 0.0
