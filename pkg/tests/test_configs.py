"""The shipped scenario configs stay valid and runnable."""

import json
from pathlib import Path

import pytest

from monest.cli import execute_run
from monest.config import load_config

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.json")),
                         ids=lambda p: p.name)
def test_shipped_config_validates(path):
    cfg = load_config(path)
    assert cfg["scenario"] in ("sine", "brake", "neuro")


def test_sine_default_converges_quickly(tmp_path):
    cfg = json.loads((CONFIG_DIR / "sine_default.json").read_text())
    cfg["tf"] = 5.0  # the full horizon is exercised by the acceptance gate
    report = execute_run(cfg, tmp_path, plots=False)
    assert report["metrics"]["final_err"] < 1e-2
