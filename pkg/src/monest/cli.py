"""Scenario-driven command-line front end.

Commands:
  run CONFIG           simulate one scenario, write CSV + JSON + figures
  sweep CONFIG ...     repeat a run over values of one config entry
  accept [--only ID]   run the acceptance scoreboard
  list-scenarios       print the registered scenario ids

MONEST_THREADS caps sweep parallelism.
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from .accept import CRITERIA, run_acceptance
from .config import ConfigError, SCENARIO_IDS, validate_config
from .report import write_csv, write_json
from .scenarios import SCENARIO_SUMMARIES, run_scenario

__all__ = ["main", "execute_run", "execute_sweep"]


def execute_run(raw_cfg: dict, out_dir: Path, plots: bool = True,
                tag: str = "") -> dict:
    """Run one scenario config and write its artifacts into out_dir."""
    cfg = validate_config(raw_cfg)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    art = run_scenario(cfg)
    prefix = f"{tag}_" if tag else ""
    csv_path = write_csv(out_dir / f"{prefix}trajectory.csv", art.columns)
    manifest = {"trajectory_csv": str(csv_path)}
    if plots:
        from .plots import render_run_figures
        for i, fig_path in enumerate(render_run_figures(art, out_dir)):
            manifest[f"figure_{i}"] = fig_path
    report = dict(art.report)
    report["manifest"] = manifest
    report_path = write_json(out_dir / f"{prefix}report.json", report)
    report["manifest"]["report_json"] = str(report_path)
    return report


def _axis_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def execute_sweep(raw_cfg: dict, axis: str, values: list, out_dir: Path,
                  plots: bool = True) -> list:
    """One run per axis value; merged summary CSV + per-run artifacts."""
    from .config import set_by_path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = validate_config(raw_cfg)

    def one(iv):
        i, v = iv
        cfg = json.loads(json.dumps(base))
        set_by_path(cfg, axis, v)
        validate_config(cfg)
        tag = f"sweep{i:03d}"
        report = execute_run(cfg, out_dir / tag, plots=plots)
        return report

    max_workers = max(1, int(os.environ.get("MONEST_THREADS", "4")))
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        reports = list(pool.map(one, enumerate(values)))

    metric_names = sorted({k for r in reports for k in r["metrics"]
                           if isinstance(r["metrics"][k], (int, float))})
    table = {"value": [float(v) if isinstance(v, (int, float)) else float("nan")
                       for v in values]}
    for name in metric_names:
        table[name] = [float(r["metrics"].get(name, float("nan"))) for r in reports]
    write_csv(out_dir / "sweep.csv", table)
    write_json(out_dir / "sweep.json",
               {"axis": axis, "values": values,
                "metrics": {n: table[n] for n in metric_names}})
    if plots and "distance" in table:
        from .plots import render_sweep_figure
        render_sweep_figure(axis, table["value"], table["distance"],
                            "distance", out_dir)
    return reports


@click.group()
def main():
    """Finite-form adaptive estimation scenarios."""


@main.command("list-scenarios")
def list_scenarios():
    for sid in SCENARIO_IDS:
        click.echo(f"{sid}: {SCENARIO_SUMMARIES[sid]}")


@main.command("run")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default="out",
              help="output directory")
@click.option("--plots/--no-plots", default=True, help="render figure files")
def run_cmd(config, out, plots):
    """Run the scenario described by the CONFIG JSON file."""
    try:
        with open(config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        report = execute_run(raw, Path(out), plots=plots)
    except ConfigError as exc:
        raise click.ClickException(f"invalid config: {exc}")
    except Exception as exc:  # runtime fault: nonzero exit with the record
        raise click.ClickException(f"run fault: {type(exc).__name__}: {exc}")
    click.echo(json.dumps({"scenario": report["scenario"],
                           "metrics": report["metrics"],
                           "checks": {k: v.get("passed") for k, v in
                                      report["checks"].items()},
                           "manifest": report["manifest"]}, indent=2,
                          sort_keys=True, default=float))
    failed = [k for k, v in report["checks"].items() if not v.get("passed", True)]
    if failed:
        raise click.ClickException(f"invariant checks failed: {failed}")


@main.command("sweep")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--axis", required=True, help="config path, e.g. plant.mode")
@click.option("--values", required=True,
              help="comma-separated values, JSON-parsed individually")
@click.option("--out", type=click.Path(file_okay=False), default="out")
@click.option("--plots/--no-plots", default=True)
def sweep_cmd(config, axis, values, out, plots):
    """Repeat the CONFIG run over several values of one entry."""
    vals = [_axis_value(v.strip()) for v in values.split(",") if v.strip()]
    if not vals:
        raise click.ClickException("no sweep values given")
    try:
        with open(config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        reports = execute_sweep(raw, axis, vals, Path(out), plots=plots)
    except ConfigError as exc:
        raise click.ClickException(f"invalid config: {exc}")
    for v, rep in zip(vals, reports):
        keys = ("distance", "final_err", "max_estimate")
        shown = {k: rep["metrics"][k] for k in keys if k in rep["metrics"]}
        click.echo(f"{axis}={v}: {shown}")


@main.command("accept")
@click.option("--only", default=None, help=f"criterion id, one of {list(CRITERIA)}")
def accept_cmd(only):
    """Run the acceptance scoreboard; exit 1 on any failing criterion."""
    try:
        results = run_acceptance(only=only)
    except KeyError as exc:
        raise click.ClickException(str(exc))
    failed = []
    for res in results:
        click.echo(res.line())
        if not res.passed:
            failed.append(res.cid)
    if failed:
        click.echo(f"FAILED criteria: {', '.join(failed)}")
        sys.exit(1)
    click.echo(f"all {len(results)} criteria passed")


if __name__ == "__main__":
    main()
