"""Scenario dispatch: validated config -> run artifacts.

Each runner returns a RunArtifacts bundle: ordered trajectory columns for
the CSV, a report dictionary with headline metrics and invariant checks,
and enough context for the figure renderers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .config import ConfigError, validate_config
from .plants import brake as brake_mod
from .plants import neuro as neuro_mod
from .plants import sine as sine_mod

__all__ = ["RunArtifacts", "run_scenario", "SCENARIO_SUMMARIES", "load_pattern_file",
           "load_image_file"]

SCENARIO_SUMMARIES = {
    "sine": "double integrator with sin(theta*x1) drift; switching atlas estimator",
    "brake": "LuGre braking wheel with slip observer and optimal-slip adaptation",
    "neuro": "Hindmarsh-Rose grid matching blurred templates via per-cell estimates",
}


@dataclass
class RunArtifacts:
    scenario: str
    config: dict
    columns: dict
    report: dict
    extras: dict = field(default_factory=dict)


def load_pattern_file(path) -> np.ndarray:
    """Binary pattern file: rows of contiguous 0/1 characters."""
    rows = [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
    arr = np.array([[float(ch) for ch in row] for row in rows])
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise ConfigError(f"pattern file {path} contains non-binary entries")
    return arr


def load_image_file(path) -> np.ndarray:
    """Intensity image file: whitespace-separated floats, one row per line."""
    rows = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    return np.array([[float(v) for v in row] for row in rows])


def _empty_artifacts(cfg) -> RunArtifacts:
    return RunArtifacts(
        scenario=cfg["scenario"],
        config=cfg,
        columns={"t": np.zeros(0)},
        report={"scenario": cfg["scenario"], "config": cfg, "samples": 0,
                "metrics": {}, "checks": {}},
    )


def _check(value, threshold, kind="max") -> dict:
    passed = value <= threshold if kind == "max" else value >= threshold
    return {"passed": bool(passed), "value": float(value), "threshold": float(threshold)}


def _run_sine(cfg) -> RunArtifacts:
    pc, ec, ac = cfg["plant"], cfg["estimator"], cfg["analysis"]
    scenario = sine_mod.build_sine_scenario(
        theta_true=pc["theta_true"], x0=tuple(pc["x0"]), tf=cfg["tf"], h=cfg["h"],
        K=ec["K"], Gamma=ec["Gamma"], theta_hat0=ec["theta_hat0"],
        dither_amp=pc["dither_amp"], dither_freq=pc["dither_freq"],
        hop_amp=pc["hop_amp"], hop_period=pc["hop_period"], hop_ramp=pc["hop_ramp"],
        with_psi=pc["with_psi"],
    )
    run = scenario.run(record_stride=cfg["record_stride"])
    c = run.columns
    columns = {
        "t": run.times,
        "x1": run.states[:, 0], "x2": run.states[:, 1], "theta_I": run.states[:, 2],
        "psi": c["psi"], "theta_hat": c["theta_hat"], "u": c["u"],
        "sigma": c["sigma"], "active_ball": c["active_ball"], "alpha": c["alpha"],
        "x1_star": c["x1_star"], "psi_dot": c["psi_dot"], "V": c["V"],
    }
    checks = {}
    on_pairs = (c["sigma"][1:] * c["sigma"][:-1]) > 0
    dV = np.diff(c["V"])
    max_inc = float(np.max(dV[on_pairs])) if on_pairs.any() else 0.0
    checks["p2_decrease"] = _check(max_inc, 1e-6)
    if run.switch_log:
        checks["switching_continuity"] = _check(
            max(j for *_, j in run.switch_log), 1e-6)
    theta_err0 = run.theta_hat0 - run.theta_true
    if ac["envelope_check"]:
        env = analysis.exp_envelope(run.psi0, run.K, 1.0, run.Gamma,
                                    [theta_err0], run.times)
        columns["envelope"] = env
        res = analysis.envelope_margin(run.times, c["psi"], run.K, 1.0,
                                       run.Gamma, [theta_err0])
        checks["envelope"] = {"passed": res["violations"] == 0,
                              "value": float(res["violations"]),
                              "threshold": 0.0,
                              "worst_margin": res["worst_margin"]}
    if ac["bound_check"]:
        phi = scenario.cfg.phi
        rep = analysis.performance_bounds(phi, run.psi0, [theta_err0],
                                          run.Gamma, 1.0)
        analysis.evaluate_bounds(rep, run.times, c["psi"], c["psi_dot"], phi)
        checks["transient_bounds"] = {
            "passed": bool(rep.satisfied),
            "l2_phi": [rep.observed_l2_phi, rep.l2_phi_bound],
            "l2_psidot": [rep.observed_l2_psidot, rep.l2_psidot_bound],
            "linf_psi": [rep.observed_linf_psi, rep.linf_psi_bound],
        }
    gram_delta = float("nan")
    if ac["pe_window"] and len(run.times) > 2:
        window = min(ac["pe_window"], 0.5 * (run.times[-1] - run.times[0]))
        gram = analysis.pe_gramian(run.times, c["alpha"][:, None], window)
        gram_delta = gram.delta_est
    report = {
        "scenario": "sine", "config": cfg, "samples": len(run.times),
        "metrics": {
            "theta_true": run.theta_true,
            "final_theta_hat": float(c["theta_hat"][-1]),
            "final_err": run.final_theta_err,
            "max_abs_psi": float(np.max(np.abs(c["psi"]))),
            "switch_count": len(run.switch_log),
            "gramian_delta": gram_delta,
        },
        "checks": checks,
    }
    return RunArtifacts("sine", cfg, columns, report,
                        extras={"run": run, "scenario_obj": scenario})


def _road_profile(pc) -> brake_mod.RoadProfile:
    if pc["profile"] is None:
        return brake_mod.REFERENCE_PROFILE
    return brake_mod.RoadProfile.from_json(pc["profile"])


def _run_brake(cfg) -> RunArtifacts:
    pc, ec = cfg["plant"], cfg["estimator"]
    scenario = brake_mod.build_brake_scenario(
        profile=_road_profile(pc),
        mode=pc["mode"],
        x1_0=pc["x1_0"] if pc["x1_0"] is not None else brake_mod.X1_INITIAL,
        x3_0=pc["x3_0"],
        theta_I0=ec["theta_I0"],
        gamma=ec["gamma"], K_xi=ec["K_xi"], eps0=ec["eps0"],
        h=cfg["h"], tf_max=cfg["tf"],
        feedforward=pc["feedforward"],
    )
    run = scenario.run(record_stride=cfg["record_stride"])
    c = run.columns
    columns = {
        "t": run.times,
        "x1": run.states[:, 0], "x2": run.states[:, 1], "x3": run.states[:, 2],
        "x3_hat": run.states[:, 3], "xi": run.states[:, 4],
        "theta_I": run.states[:, 5], "s": run.states[:, 6],
        "theta_road": c["theta_road"], "theta_hat": c["theta_hat"],
        "psi": c["psi"], "u": c["u"], "Fs": c["Fs"], "x3_star": c["x3_star"],
        "alpha": c["alpha"], "xi_err": c["xi_err"], "psi_dot": c["psi_dot"],
        "segment": c["segment"], "V": c["V"],
    }
    seg = c["segment"]
    same_seg = seg[1:] == seg[:-1]
    dV = np.diff(c["V"])
    max_inc = float(np.max(dV[same_seg])) if same_seg.any() else 0.0
    t_tail = run.times > 0.5
    checks = {
        "p2_decrease": _check(max_inc, 1e-6),
        "xi_tracking": _check(
            float(np.max(np.abs(c["xi_err"][t_tail]))) if t_tail.any() else 0.0,
            scenario.gains.eps0),
        "estimator_diverged": {"passed": not run.diverged,
                               "value": float(run.diverged), "threshold": 0.0},
    }
    report = {
        "scenario": "brake", "config": cfg, "samples": len(run.times),
        "metrics": {
            "distance": run.distance,
            "stop_time": float(run.times[-1]),
            "final_theta_hat": float(c["theta_hat"][-1]),
            "max_slip": float(np.max(run.states[:, 2])),
        },
        "checks": checks,
    }
    return RunArtifacts("brake", cfg, columns, report,
                        extras={"run": run, "scenario_obj": scenario})


def _run_neuro(cfg) -> RunArtifacts:
    pc, ec = cfg["plant"], cfg["estimator"]
    p = neuro_mod.HRParams(theta0=pc["theta0"])
    grid = None
    if pc["P1_file"] or pc["P2_file"] or pc["image_file"]:
        N = pc["N"]
        P1 = load_pattern_file(pc["P1_file"]) if pc["P1_file"] else neuro_mod.square_pattern(N)
        P2 = load_pattern_file(pc["P2_file"]) if pc["P2_file"] else neuro_mod.cross_pattern(N)
        N = P1.shape[0]
        if pc["image_file"]:
            S = load_image_file(pc["image_file"])
        elif pc["image"] == "zeros":
            S = np.zeros((N, N))
        else:
            S = neuro_mod.manhattan_blur(P1, pc["blur_theta1"])
        grid = neuro_mod.PatternGrid(N=N, P1=P1, P2=P2, S=S,
                                     tau_delay=neuro_mod.default_delays(N, pc["T"]))
    scenario = neuro_mod.build_neuro_scenario(
        grid=grid, N=pc["N"], image=pc["image"], blur_theta1=pc["blur_theta1"],
        p=p, T=pc["T"], tf=cfg["tf"], h=cfg["h"],
        harmonize_sensory_lag=pc["harmonize_sensory_lag"],
        theta_I0=ec["theta_I0"], estimate_bound=pc["estimate_bound"],
    )
    run = scenario.run(record_stride=cfg["record_stride"])
    N = scenario.grid.N
    p1_cells = scenario.grid.P1.ravel().astype(bool)
    p2_cells = scenario.grid.P2.ravel().astype(bool)
    probe1 = int(np.argmax(scenario.grid.P1.ravel())) if p1_cells.any() else 0
    probe2 = int(np.argmax(scenario.grid.P2.ravel())) if p2_cells.any() else N * N - 1
    columns = {"t": run.times}
    for tag, idx in (("p1", probe1), ("p2", probe2)):
        columns[f"{tag}_x1"] = run.x1[:, idx]
        columns[f"{tag}_x1_hat"] = run.x1_hat[:, idx]
        columns[f"{tag}_x1_bar"] = run.x1_bar[:, idx]
        columns[f"{tag}_theta1"] = run.theta1[:, idx]
        columns[f"{tag}_theta1_bar"] = run.theta1_bar[:, idx]
    columns["max_abs_theta1"] = np.max(np.abs(run.theta1), axis=1)
    metrics = {
        "N": N,
        "max_estimate": run.max_estimate,
        "bounded": run.bounded,
        "sync1_worst_p1": float(np.max(run.synchrony1[p1_cells])) if p1_cells.any() else float("nan"),
        "sync2_worst_p2": float(np.max(run.synchrony2[p2_cells])) if p2_cells.any() else float("nan"),
    }
    checks = {
        "estimates_bounded": {"passed": run.bounded, "value": run.max_estimate,
                              "threshold": scenario.estimate_bound},
    }
    if cfg["plant"]["image"] == "matched_p1" and p1_cells.any():
        rel = np.abs(run.theta1_final()[p1_cells] - pc["blur_theta1"]) / pc["blur_theta1"]
        metrics["worst_rel_theta1_err_p1"] = float(np.max(rel))
        checks["matched_convergence"] = _check(float(np.max(rel)), 0.05)
        checks["matched_synchrony"] = _check(metrics["sync1_worst_p1"], 0.05)
    report = {
        "scenario": "neuro", "config": cfg, "samples": len(run.times),
        "metrics": metrics, "checks": checks,
    }
    return RunArtifacts("neuro", cfg, columns, report,
                        extras={"run": run, "scenario_obj": scenario})


def run_scenario(cfg: dict) -> RunArtifacts:
    """Run one validated scenario configuration to artifacts."""
    cfg = validate_config(cfg)
    if cfg["tf"] <= 0.0:
        return _empty_artifacts(cfg)
    runner = {"sine": _run_sine, "brake": _run_brake, "neuro": _run_neuro}[cfg["scenario"]]
    return runner(cfg)
