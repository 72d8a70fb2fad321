"""Figure renderers for the report path.

Every run writes a small set of PNG diagnostics next to its CSV output:
state/error traces, estimate convergence, and scenario-specific panels.
Rendering is headless (Agg) and file-only.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["render_run_figures", "render_sweep_figure"]


def _save(fig, path: Path, manifest: list):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    manifest.append(str(path))


def _sine_figures(art, out: Path, manifest: list):
    c, t = art.columns, art.columns["t"]
    fig, axes = plt.subplots(3, 1, figsize=(8, 8), sharex=True)
    axes[0].plot(t, c["x1"], label="x1")
    axes[0].plot(t, c["x1_star"], "--", label="x1 set-point")
    axes[0].plot(t, c["x2"], label="x2", alpha=0.7)
    axes[0].set_ylabel("state")
    axes[0].legend(loc="best", fontsize=8)
    axes[1].plot(t, c["psi"], label="psi")
    if "envelope" in c:
        axes[1].plot(t, c["envelope"], "r--", label="envelope")
        axes[1].plot(t, -c["envelope"], "r--")
    axes[1].set_ylabel("deviation")
    axes[1].legend(loc="best", fontsize=8)
    theta_true = art.report["metrics"]["theta_true"]
    axes[2].plot(t, c["theta_hat"], label="estimate")
    axes[2].axhline(theta_true, color="k", ls="--", label="true")
    sig = c["sigma"] > 0
    axes[2].fill_between(t, *axes[2].get_ylim(), where=~sig, color="0.9",
                         label="steering")
    axes[2].set_ylabel("parameter")
    axes[2].set_xlabel("t")
    axes[2].legend(loc="best", fontsize=8)
    _save(fig, out / "sine_run.png", manifest)


def _brake_figures(art, out: Path, manifest: list):
    c, t = art.columns, art.columns["t"]
    fig, axes = plt.subplots(3, 1, figsize=(8, 8), sharex=True)
    axes[0].plot(t, c["x1"], label="velocity [m/s]")
    ax0b = axes[0].twinx()
    ax0b.plot(t, c["s"], "g", alpha=0.6, label="distance [m]")
    ax0b.set_ylabel("s [m]")
    axes[0].set_ylabel("x1 [m/s]")
    axes[0].legend(loc="upper right", fontsize=8)
    axes[1].plot(t, c["x3"], label="slip")
    axes[1].plot(t, c["x3_star"], "--", label="slip target")
    axes[1].set_ylabel("slip")
    axes[1].legend(loc="best", fontsize=8)
    axes[2].plot(t, c["theta_hat"], label="estimate")
    axes[2].plot(t, c["theta_road"], "k--", label="road parameter")
    axes[2].set_ylabel("theta")
    axes[2].set_xlabel("t [s]")
    axes[2].set_ylim(-0.1, 2.1)
    axes[2].legend(loc="best", fontsize=8)
    _save(fig, out / "brake_run.png", manifest)


def _neuro_figures(art, out: Path, manifest: list):
    c, t = art.columns, art.columns["t"]
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    axes[0].plot(t, c["p1_x1"], label="input unit (P1 probe)", lw=0.7)
    axes[0].plot(t, c["p1_x1_hat"], label="template-1 unit", lw=0.7, alpha=0.8)
    axes[0].set_ylabel("membrane")
    axes[0].legend(loc="best", fontsize=8)
    axes[1].plot(t, c["p1_theta1"], label="blur estimate (P1 probe)")
    axes[1].plot(t, c["p2_theta1_bar"], label="template-2 estimate (P2 probe)")
    blur = art.config["plant"]["blur_theta1"]
    axes[1].axhline(blur, color="k", ls="--", label="true blur")
    axes[1].set_ylabel("theta1")
    axes[1].set_xlabel("t")
    axes[1].legend(loc="best", fontsize=8)
    _save(fig, out / "neuro_run.png", manifest)

    run = art.extras.get("run")
    sc = art.extras.get("scenario_obj")
    if run is not None and sc is not None:
        N = sc.grid.N
        fig, axes = plt.subplots(1, 3, figsize=(10, 3.4))
        im0 = axes[0].imshow(sc.grid.S, cmap="viridis")
        axes[0].set_title("presented image")
        fig.colorbar(im0, ax=axes[0], fraction=0.046)
        for ax, sync, name in ((axes[1], run.synchrony1, "sync vs template 1"),
                               (axes[2], run.synchrony2, "sync vs template 2")):
            im = ax.imshow(sync.reshape(N, N), vmin=0.0, vmax=1.0, cmap="magma_r")
            ax.set_title(name)
            fig.colorbar(im, ax=ax, fraction=0.046)
        _save(fig, out / "neuro_synchrony.png", manifest)


def render_run_figures(art, out_dir) -> list:
    """Render the per-run diagnostic figures; returns the file manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: list = []
    if len(art.columns["t"]) == 0:
        return manifest
    {"sine": _sine_figures, "brake": _brake_figures, "neuro": _neuro_figures}[
        art.scenario](art, out, manifest)
    return manifest


def render_sweep_figure(axis: str, values, metrics: list, metric_name: str,
                        out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(values, metrics, "o-")
    ax.set_xlabel(axis)
    ax.set_ylabel(metric_name)
    manifest: list = []
    _save(fig, out / "sweep.png", manifest)
    return manifest
