"""Acceptance gate: every headline guarantee as an executable criterion.

Each criterion returns a result record with the measured values; the CLI
prints one line per criterion and exits nonzero on any failure.  The
expensive simulation runs are cached and shared between criteria.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import analysis
from .core import Box, PartitionedState, check_monotonicity, hadamard_gap
from .plants import brake as brake_mod
from .plants import neuro as neuro_mod
from .plants import sine as sine_mod

__all__ = ["CriterionResult", "CRITERIA", "run_acceptance", "DEFAULT_TOLERANCES"]

DEFAULT_TOLERANCES = {
    "brake_distance_rel": 0.05,
    "tracking_rel": 0.05,
    "tracking_window": 0.5,
    "p2_step_increase": 1e-6,
    "bound_draws": 20,
    "envelope_rate_factor": 0.5,
    "gramian_abs": 1e-6,
    "fd_ratio_floor": 3.5,
    "hadamard_abs": 1e-8,
    "switch_jump": 1e-6,
    "neuro_rel": 0.05,
    "neuro_sync": 0.05,
    "neuro_runtime": 300.0,
    "brake_runtime": 30.0,
}

BRAKE_TARGETS = {"fixed_0.1": 57.52, "fixed_0.2": 55.32, "adaptive": 54.95}


@dataclass
class CriterionResult:
    cid: str
    title: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.cid}: {self.title} -- {self.summary}"


# -- shared cached runs -------------------------------------------------------

@lru_cache(maxsize=None)
def _brake_run(mode_key: str):
    mode = "adaptive" if mode_key == "adaptive" else float(mode_key)
    t0 = time.perf_counter()
    run = brake_mod.build_brake_scenario(mode=mode).run()
    elapsed = time.perf_counter() - t0
    return run, elapsed


@lru_cache(maxsize=None)
def _sine_pe_run(tf: float = 20.0, h: float = 1e-3):
    scenario = sine_mod.build_sine_scenario(
        theta_true=1.2, x0=(sine_mod.X1_STAR, 0.0), tf=tf, h=h,
        theta_hat0=0.7, dither_amp=0.1)
    return scenario.run(), scenario


@lru_cache(maxsize=None)
def _sine_bound_draws(n_draws: int, tf: float = 20.0):
    rng = np.random.default_rng(20240 + n_draws)
    results = []
    for _ in range(n_draws):
        theta = rng.uniform(0.6, 1.4)
        theta_hat0 = float(np.clip(theta + rng.uniform(-0.4, 0.4), 0.6, 1.4))
        dx1 = rng.uniform(-0.04, 0.04)
        psi0 = rng.uniform(-0.04, 0.04)
        x0 = (sine_mod.X1_STAR + dx1, psi0 - dx1)
        scenario = sine_mod.build_sine_scenario(
            theta_true=theta, x0=x0, tf=tf, h=1e-3,
            theta_hat0=theta_hat0, dither_amp=0.1)
        run = scenario.run()
        phi = scenario.cfg.phi
        rep = analysis.performance_bounds(phi, run.psi0, [theta_hat0 - theta],
                                          run.Gamma, 1.0)
        analysis.evaluate_bounds(rep, run.times, run.columns["psi"],
                                 run.columns["psi_dot"], phi)
        results.append((run, rep))
    return results


@lru_cache(maxsize=None)
def _sine_switch_run():
    scenario = sine_mod.build_sine_scenario(
        theta_true=1.3, x0=(sine_mod.X1_STAR, 0.0), tf=30.0, h=1e-3,
        theta_hat0=0.65, hop_amp=0.5, hop_period=6.0)
    return scenario.run()


@lru_cache(maxsize=None)
def _neuro_matched_run(N: int = 20, tf: float = 80.0):
    scenario = neuro_mod.build_neuro_scenario(N=N, image="matched_p1",
                                              blur_theta1=2.0, tf=tf)
    t0 = time.perf_counter()
    run = scenario.run(record_stride=40)
    elapsed = time.perf_counter() - t0
    return run, scenario, elapsed


@lru_cache(maxsize=None)
def _neuro_zeros_run(N: int = 20, tf: float = 40.0):
    scenario = neuro_mod.build_neuro_scenario(N=N, image="zeros", tf=tf)
    return scenario.run(record_stride=40), scenario


# -- criteria -----------------------------------------------------------------

def _c1_brake_baselines(tol) -> CriterionResult:
    details = {}
    passed = True
    msgs = []
    for key in ("fixed_0.1", "fixed_0.2"):
        run, elapsed = _brake_run(key.split("_")[1])
        target = BRAKE_TARGETS[key]
        rel = (run.distance - target) / target
        ok = abs(rel) <= tol["brake_distance_rel"] and elapsed < tol["brake_runtime"]
        passed &= ok
        details[key] = {"distance": run.distance, "target": target,
                        "rel_err": rel, "runtime_s": elapsed}
        msgs.append(f"{key}: {run.distance:.2f} m ({100 * rel:+.2f}% vs {target})")
    return CriterionResult("A1", "fixed-slip braking baselines", passed,
                           "; ".join(msgs), details)


def _c2_brake_adaptive(tol) -> CriterionResult:
    run_a, elapsed = _brake_run("adaptive")
    run1, _ = _brake_run("0.1")
    run2, _ = _brake_run("0.2")
    target = BRAKE_TARGETS["adaptive"]
    rel = (run_a.distance - target) / target
    ordering = run_a.distance < run2.distance < run1.distance
    passed = abs(rel) <= tol["brake_distance_rel"] and ordering \
        and elapsed < tol["brake_runtime"]
    return CriterionResult(
        "A2", "adaptive braking beats both baselines", passed,
        f"adaptive {run_a.distance:.2f} m ({100 * rel:+.2f}% vs {target}); "
        f"ordering adaptive<fixed(0.2)<fixed(0.1): {ordering}",
        {"distance": run_a.distance, "rel_err": rel, "ordering": ordering,
         "runtime_s": elapsed})


def _c3_brake_tracking(tol) -> CriterionResult:
    run, _ = _brake_run("adaptive")
    t, c = run.times, run.columns
    seg = c["segment"].astype(int)
    worst = 0.0
    per_segment = {}
    for sg in np.unique(seg):
        m = seg == sg
        ts, te = t[m][0], t[m][-1]
        theta_seg = c["theta_road"][m][0]
        t_check = min(ts + tol["tracking_window"], te)
        mm = m & (t >= t_check)
        if not mm.any():
            mm = m & (t == te)
        rel = float(np.max(np.abs(c["theta_hat"][mm] - theta_seg)) / theta_seg)
        per_segment[int(sg)] = rel
        worst = max(worst, rel)
    passed = worst < tol["tracking_rel"]
    return CriterionResult(
        "A3", "road-parameter tracking per segment", passed,
        f"worst relative error after the check point: {100 * worst:.3f}%",
        {"per_segment": per_segment})


def _p2_max_increase_sine(run) -> float:
    c = run.columns
    on_pairs = (c["sigma"][1:] * c["sigma"][:-1]) > 0
    dV = np.diff(c["V"])
    return float(np.max(dV[on_pairs])) if on_pairs.any() else 0.0


def _c4_p2(tol) -> CriterionResult:
    sine_run, _ = _sine_pe_run()
    inc_sine = _p2_max_increase_sine(sine_run)
    brk, _ = _brake_run("adaptive")
    seg = brk.columns["segment"]
    same = seg[1:] == seg[:-1]
    dV = np.diff(brk.columns["V"])
    inc_brake = float(np.max(dV[same])) if same.any() else 0.0
    worst = max(inc_sine, inc_brake)
    passed = worst <= tol["p2_step_increase"]
    return CriterionResult(
        "A4", "parameter-error decrease (P2)", passed,
        f"max per-step increase: sine {inc_sine:.2e}, brake {inc_brake:.2e}",
        {"sine": inc_sine, "brake": inc_brake})


def _c5_bounds(tol) -> CriterionResult:
    results = _sine_bound_draws(int(tol["bound_draws"]))
    violations = sum(0 if rep.satisfied else 1 for _, rep in results)
    margins = [
        min(rep.l2_phi_bound - rep.observed_l2_phi,
            rep.l2_psidot_bound - rep.observed_l2_psidot,
            rep.linf_psi_bound - rep.observed_linf_psi)
        for _, rep in results
    ]
    passed = violations == 0
    return CriterionResult(
        "A5", "transient-performance bounds over random draws", passed,
        f"{len(results)} draws, {violations} violations, "
        f"smallest margin {min(margins):.3e}",
        {"violations": violations, "min_margin": float(min(margins))})


def _c6_envelope_and_rate(tol) -> CriterionResult:
    run, scenario = _sine_pe_run()
    c = run.columns
    theta_err0 = run.theta_hat0 - run.theta_true
    env = analysis.envelope_margin(run.times, c["psi"], run.K, 1.0,
                                   run.Gamma, [theta_err0])
    on = c["sigma"] > 0
    norms = np.abs(c["theta_hat"] - run.theta_true)
    fit = analysis.exp_rate_fit(run.times[on], norms[on])
    window = 3.2
    gram = analysis.pe_gramian(run.times[on], c["alpha"][on][:, None], window)
    visited = Box([c["x1_star"].min() - 0.15, -0.3], [c["x1_star"].max() + 0.15, 0.3])
    mono = check_monotonicity(
        sine_mod.sine_parametrization(scenario.setpoint),
        visited, sine_mod.THETA_BOX, n_samples=4000, m1=1, seed=5)
    floor = run.Gamma * mono.D1_est * gram.delta_est / gram.window
    rate_ok = fit["lambda_est"] >= tol["envelope_rate_factor"] * floor
    passed = env["violations"] == 0 and rate_ok
    return CriterionResult(
        "A6", "exponential envelope and convergence rate", passed,
        f"envelope violations {env['violations']} "
        f"(worst margin {env['worst_margin']:.3e}); "
        f"rate {fit['lambda_est']:.2f} vs floor {floor:.2f} "
        f"(factor {tol['envelope_rate_factor']})",
        {"envelope": env, "lambda_est": fit["lambda_est"],
         "r_squared": fit["r_squared"], "floor": floor,
         "gram_delta": gram.delta_est, "D1_est": mono.D1_est})


def _c7_gramian_oracle(tol) -> CriterionResult:
    n = 8192
    dt = 2.0 * math.pi / 1024.0
    t = np.arange(n) * dt
    alpha = np.stack([np.sin(t), np.cos(t)], axis=1)
    gram = analysis.pe_gramian(t, alpha, 2.0 * math.pi)
    err = float(np.max(np.abs(gram.min_eigs - math.pi)))
    passed = err <= tol["gramian_abs"]
    return CriterionResult(
        "A7", "windowed-Gramian closed-form oracle", passed,
        f"max |min_eig - pi| = {err:.3e}",
        {"error": err, "delta_est": gram.delta_est})


def _fd_vs_effective_sine(h: float) -> float:
    run, scenario = _sine_pe_run(20.0, h)
    t, c = run.times, run.columns
    th = c["theta_hat"]
    fd = (th[2:] - th[:-2]) / (t[2:] - t[:-2])
    x1 = run.states[1:-1, 0]
    psi = c["psi"][1:-1]
    psid = c["psi_dot"][1:-1]
    alpha = c["alpha"][1:-1]
    thm = th[1:-1]
    gap = np.sin(run.theta_true * x1) - np.sin(thm * x1)
    eff = run.Gamma * ((psid + run.K * psi) * alpha - psi * gap)
    on = (c["sigma"][2:] * c["sigma"][1:-1] * c["sigma"][:-2]) > 0
    return float(np.max(np.abs(fd[on] - eff[on])))


def _fd_vs_effective_brake(h: float) -> float:
    scenario = brake_mod.build_brake_scenario(mode="adaptive", h=h, tf_max=2.0)
    run = scenario.run()
    t, c = run.times, run.columns
    th = c["theta_hat"]
    fd = (th[2:] - th[:-2]) / (t[2:] - t[:-2])
    eff = -scenario.gains.gamma * (c["psi_dot"] + c["psi"]) * run.states[:, 4]
    eff = eff[1:-1]
    # Mask an h-independent window around each road step: the estimate
    # re-converges at a fast rate there, and the transient's high-order
    # derivatives would otherwise dominate the finite-difference error at
    # a distance that shrinks with the stencil.
    seg = c["segment"]
    change_times = t[1:][seg[1:] != seg[:-1]]
    tm = t[1:-1]
    ok = tm > 0.5
    for tc in change_times:
        ok &= (tm < tc - 0.02) | (tm > tc + 0.25)
    return float(np.max(np.abs(fd[ok] - eff[ok])))


def _fd_vs_effective_neuro(h: float) -> float:
    N = 5
    p = neuro_mod.HRParams()
    grid = neuro_mod.PatternGrid(
        N=N, P1=neuro_mod.square_pattern(N), P2=neuro_mod.cross_pattern(N),
        S=neuro_mod.manhattan_blur(neuro_mod.square_pattern(N), 2.0),
        tau_delay=neuro_mod.default_delays(N, 40.0))
    T = 40.0
    k = (2, 2)

    def r_true(t):
        return neuro_mod.receptive_field_drive(grid, "image", k, 2.0, t, T, p)

    def r_template(t, th):
        return neuro_mod.receptive_field_drive(
            grid, "template1", k, max(0.05, th), t, T, p)

    times, x4, x4h, th = neuro_mod.run_filter_cell(
        r_true, r_template, p, tf=6.0, h=h, theta_I0=1.0)
    fd = (th[2:] - th[:-2]) / (times[2:] - times[:-2])
    psi = (x4 - x4h)[1:-1]
    psid = np.array([
        neuro_mod.sensory_rhs(x4[i], r_true(times[i]), p, "input")
        - neuro_mod.sensory_rhs(x4h[i], r_template(times[i], th[i]), p, "input")
        for i in range(1, len(times) - 1)
    ])
    eff = psid + (p.beta / p.tau) * psi
    # Mask an h-independent window around each pulse edge: edges kick the
    # sensory lag, whose 1/tau-rate transient dominates the high-order
    # derivatives entering the finite-difference error nearby.
    width = 0.05 * T
    edges = np.unique(np.concatenate([
        grid.tau_delay.ravel() % T, (grid.tau_delay.ravel() + width) % T]))
    tm = times[1:-1]
    dist = np.min(np.abs(((tm[:, None] - edges[None, :]) + T / 2) % T - T / 2), axis=1)
    ok = dist > 5.0 * p.tau
    return float(np.max(np.abs(fd[ok] - eff[ok])))


def _c8_fd_identity(tol) -> CriterionResult:
    details = {}
    passed = True
    msgs = []
    for name, fn, h in (("sine", _fd_vs_effective_sine, 1e-3),
                        ("brake", _fd_vs_effective_brake, 1e-4),
                        ("neuro", _fd_vs_effective_neuro, 1e-3)):
        err_h = fn(h)
        err_h2 = fn(h / 2.0)
        ratio = err_h / err_h2 if err_h2 > 0 else float("inf")
        ok = ratio >= tol["fd_ratio_floor"]
        passed &= ok
        details[name] = {"err_h": err_h, "err_h_half": err_h2, "ratio": ratio}
        msgs.append(f"{name}: ratio {ratio:.2f}")
    return CriterionResult(
        "A8", "finite-form derivative identity (order check)", passed,
        "; ".join(msgs), details)


def _c9_hadamard(tol) -> CriterionResult:
    plant = sine_mod.sine_plant(1.0)
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(100):
        x = PartitionedState([rng.uniform(-3.38, 3.38)], [rng.uniform(-1.0, 1.0)])
        th = rng.uniform(0.6, 1.4, size=1)
        th_p = rng.uniform(0.6, 1.4, size=1)
        F = hadamard_gap(plant.f2, x, th, th_p, quad_points=16,
                         df2_dtheta=plant.df2_dtheta)
        gap = plant.f2(x, th_p) - plant.f2(x, th)
        worst = max(worst, float(np.abs(F @ (th_p - th) - gap)[0]))
    passed = worst <= tol["hadamard_abs"]
    return CriterionResult(
        "A9", "segment-averaged Jacobian identity", passed,
        f"max defect over 100 draws: {worst:.3e}", {"worst": worst})


def _c10_switching(tol) -> CriterionResult:
    run = _sine_switch_run()
    jumps = [j for *_, j in run.switch_log]
    worst = max(jumps) if jumps else 0.0
    bound = float(np.max(np.abs(run.states[:, :2])))
    enough = len(run.switch_log) >= 3
    passed = worst < tol["switch_jump"] and bound < 10.0 and enough
    return CriterionResult(
        "A10", "switching continuity and boundedness", passed,
        f"{len(run.switch_log)} toggles, max estimate jump {worst:.2e}, "
        f"state bound {bound:.2f}",
        {"toggles": len(run.switch_log), "worst_jump": worst, "state_bound": bound})


def _c11_neuro(tol) -> CriterionResult:
    run, scenario, elapsed = _neuro_matched_run()
    p1 = scenario.grid.P1.ravel().astype(bool)
    rel = float(np.max(np.abs(run.theta1_final()[p1] - 2.0) / 2.0))
    sync = float(np.max(run.synchrony1[p1]))
    zeros_run, _ = _neuro_zeros_run()
    passed = (rel < tol["neuro_rel"] and sync < tol["neuro_sync"]
              and zeros_run.bounded and elapsed < tol["neuro_runtime"])
    return CriterionResult(
        "A11", "desk-scale pattern recognition", passed,
        f"worst blur error {100 * rel:.2f}%, worst matched synchrony {sync:.3f}, "
        f"zero-image max estimate {zeros_run.max_estimate:.1f} "
        f"(bounded: {zeros_run.bounded}), runtime {elapsed:.0f}s",
        {"rel_err": rel, "sync": sync, "runtime_s": elapsed,
         "zeros_max_estimate": zeros_run.max_estimate})


def _c12_determinism(tol) -> CriterionResult:
    import tempfile
    from pathlib import Path

    from .cli import execute_run

    cfg = {"scenario": "sine", "tf": 2.0,
           "plant": {"theta_true": 1.1}, "estimator": {"theta_hat0": 0.8}}
    digests = []
    for _ in range(2):
        with tempfile.TemporaryDirectory() as tmp:
            report = execute_run(cfg, Path(tmp), plots=False)
            data = Path(report["manifest"]["trajectory_csv"]).read_bytes()
            digests.append(data)
    passed = digests[0] == digests[1]
    return CriterionResult(
        "A12", "byte-identical repeated runs", passed,
        f"CSV bytes identical: {passed} ({len(digests[0])} bytes)",
        {"bytes": len(digests[0])})


CRITERIA = {
    "A1": ("fixed-slip braking baselines", _c1_brake_baselines),
    "A2": ("adaptive braking beats both baselines", _c2_brake_adaptive),
    "A3": ("road-parameter tracking per segment", _c3_brake_tracking),
    "A4": ("parameter-error decrease (P2)", _c4_p2),
    "A5": ("transient-performance bounds over random draws", _c5_bounds),
    "A6": ("exponential envelope and convergence rate", _c6_envelope_and_rate),
    "A7": ("windowed-Gramian closed-form oracle", _c7_gramian_oracle),
    "A8": ("finite-form derivative identity (order check)", _c8_fd_identity),
    "A9": ("segment-averaged Jacobian identity", _c9_hadamard),
    "A10": ("switching continuity and boundedness", _c10_switching),
    "A11": ("desk-scale pattern recognition", _c11_neuro),
    "A12": ("byte-identical repeated runs", _c12_determinism),
}


def run_acceptance(only=None, tolerances=None) -> list:
    """Run all (or one) acceptance criteria and return their results."""
    tol = dict(DEFAULT_TOLERANCES)
    if tolerances:
        unknown = set(tolerances) - set(tol)
        if unknown:
            raise KeyError(f"unknown tolerance overrides: {sorted(unknown)}")
        tol.update(tolerances)
    if only is not None:
        if only not in CRITERIA:
            raise KeyError(f"unknown criterion {only!r}; known: {list(CRITERIA)}")
        ids = [only]
    else:
        ids = list(CRITERIA)
    return [CRITERIA[cid][1](tol) for cid in ids]
