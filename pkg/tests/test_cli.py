import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from monest import accept
from monest.cli import execute_run, execute_sweep, main
from monest.config import (ConfigError, default_config, set_by_path,
                           validate_config)
from monest.report import read_csv_columns, write_csv


class TestConfigSchema:
    def test_defaults_validate(self):
        for sid in ("sine", "brake", "neuro"):
            cfg = validate_config({"scenario": sid})
            assert cfg["scenario"] == sid
            assert cfg["h"] > 0

    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ConfigError) as e:
            validate_config({"scenario": "sine", "step": 0.1})
        assert "step" in str(e.value)

    def test_unknown_section_key_rejected_with_names(self):
        with pytest.raises(ConfigError) as e:
            validate_config({"scenario": "brake",
                             "plant": {"mode": 0.1, "tires": 4}})
        assert "tires" in str(e.value)

    def test_type_checked(self):
        with pytest.raises(ConfigError):
            validate_config({"scenario": "sine", "tf": "long"})
        with pytest.raises(ConfigError):
            validate_config({"scenario": "neuro", "plant": {"N": 8.5}})

    def test_unknown_scenario(self):
        with pytest.raises(ConfigError):
            validate_config({"scenario": "warp"})

    def test_round_trip_revalidates(self):
        cfg = validate_config({"scenario": "sine", "tf": 3.0})
        again = validate_config(json.loads(json.dumps(cfg)))
        assert again == cfg

    def test_set_by_path(self):
        cfg = default_config("brake")
        set_by_path(cfg, "plant.mode", 0.15)
        assert cfg["plant"]["mode"] == 0.15
        with pytest.raises(ConfigError):
            set_by_path(cfg, "plant.nope", 1)


class TestCsvWriter:
    def test_round_trip_precision(self, tmp_path):
        cols = {"t": np.array([0.1, 1.0 / 3.0]),
                "x": np.array([1e-17, 123456.789012345])}
        path = write_csv(tmp_path / "c.csv", cols)
        back = read_csv_columns(path)
        assert np.array_equal(back["t"], cols["t"])
        assert np.array_equal(back["x"], cols["x"])

    def test_rfc4180_line_endings(self, tmp_path):
        path = write_csv(tmp_path / "c.csv", {"a": np.array([1.0])})
        raw = path.read_bytes()
        assert raw.count(b"\r\n") == 2
        assert b"\n" not in raw.replace(b"\r\n", b"")

    def test_ragged_columns_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_csv(tmp_path / "c.csv", {"a": np.zeros(2), "b": np.zeros(3)})


class TestRunCommand:
    def test_empty_run_tf_zero(self, tmp_path):
        report = execute_run({"scenario": "sine", "tf": 0.0}, tmp_path,
                             plots=False)
        assert report["samples"] == 0
        csv = Path(report["manifest"]["trajectory_csv"])
        assert csv.exists()
        assert read_csv_columns(csv)["t"].size == 0

    def test_run_writes_artifacts_and_report(self, tmp_path):
        report = execute_run({"scenario": "sine", "tf": 2.0,
                              "plant": {"theta_true": 1.1},
                              "estimator": {"theta_hat0": 0.9}},
                             tmp_path, plots=True)
        assert (tmp_path / "trajectory.csv").exists()
        assert (tmp_path / "report.json").exists()
        assert (tmp_path / "sine_run.png").exists()
        assert report["checks"]["p2_decrease"]["passed"]

    def test_config_echo_revalidates(self, tmp_path):
        report = execute_run({"scenario": "brake", "tf": 0.5,
                              "record_stride": 50, "plant": {"mode": 0.15}},
                             tmp_path, plots=False)
        assert validate_config(json.loads(json.dumps(report["config"]))) \
            == report["config"]

    def test_determinism_byte_identical(self, tmp_path):
        cfg = {"scenario": "sine", "tf": 1.0,
               "plant": {"theta_true": 1.2}, "estimator": {"theta_hat0": 0.8}}
        a = execute_run(cfg, tmp_path / "a", plots=False)
        b = execute_run(cfg, tmp_path / "b", plots=False)
        assert Path(a["manifest"]["trajectory_csv"]).read_bytes() == \
            Path(b["manifest"]["trajectory_csv"]).read_bytes()

    def test_cli_run_invalid_config_lists_keys(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"scenario": "sine", "plant": {"zeta": 1}}))
        result = CliRunner().invoke(main, ["run", str(bad), "--out",
                                           str(tmp_path / "out")])
        assert result.exit_code != 0
        assert "zeta" in result.output

    def test_cli_run_happy_path(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"scenario": "sine", "tf": 1.0}))
        result = CliRunner().invoke(
            main, ["run", str(cfg), "--out", str(tmp_path / "out"),
                   "--no-plots"])
        assert result.exit_code == 0, result.output
        assert "final_err" in result.output

    def test_brake_profile_from_config(self, tmp_path):
        cfg = {"scenario": "brake", "tf": 1.0, "record_stride": 50,
               "plant": {"mode": 0.15,
                         "profile": [{"s_end": 5.0, "theta": 0.5},
                                     {"s_end": None, "theta": 1.0}]}}
        report = execute_run(cfg, tmp_path, plots=False)
        assert report["metrics"]["distance"] > 5.0

    def test_neuro_pattern_files(self, tmp_path):
        (tmp_path / "p1.txt").write_text("0000\n0110\n0110\n0000\n")
        (tmp_path / "img.txt").write_text(
            "\n".join(" ".join("0.2" for _ in range(4)) for _ in range(4)) + "\n")
        cfg = {"scenario": "neuro", "tf": 0.5, "h": 2e-3, "record_stride": 10,
               "plant": {"N": 4, "P1_file": str(tmp_path / "p1.txt"),
                         "image_file": str(tmp_path / "img.txt")}}
        report = execute_run(cfg, tmp_path / "out", plots=False)
        assert report["samples"] > 0


class TestSweep:
    def test_sine_theta_sweep_converges(self, tmp_path):
        cfg = {"scenario": "sine", "tf": 10.0,
               "estimator": {"theta_hat0": 1.0}}
        reports = execute_sweep(cfg, "plant.theta_true", [0.7, 1.0, 1.3],
                                tmp_path, plots=False)
        for rep in reports:
            assert rep["metrics"]["final_err"] < 1e-2
        table = read_csv_columns(tmp_path / "sweep.csv")
        assert list(table["value"]) == [0.7, 1.0, 1.3]

    def test_single_value_sweep_equals_run(self, tmp_path):
        cfg = {"scenario": "sine", "tf": 1.0}
        execute_sweep(cfg, "plant.theta_true", [1.1], tmp_path / "s",
                      plots=False)
        execute_run(validate_config({"scenario": "sine", "tf": 1.0,
                                     "plant": {"theta_true": 1.1}}),
                    tmp_path / "r", plots=False)
        a = (tmp_path / "s" / "sweep000" / "trajectory.csv").read_bytes()
        b = (tmp_path / "r" / "trajectory.csv").read_bytes()
        assert a == b

    def test_cli_sweep_values_parsing(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"scenario": "sine", "tf": 0.5}))
        result = CliRunner().invoke(
            main, ["sweep", str(cfg), "--axis", "plant.theta_true",
                   "--values", "0.8,1.2", "--out", str(tmp_path / "out"),
                   "--no-plots"])
        assert result.exit_code == 0, result.output

    def test_thread_cap_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MONEST_THREADS", "1")
        cfg = {"scenario": "sine", "tf": 0.5}
        reports = execute_sweep(cfg, "plant.theta_true", [0.9, 1.1],
                                tmp_path, plots=False)
        assert len(reports) == 2

    @pytest.mark.slow
    def test_brake_fixed_slip_sweep_bracketed_by_baselines(self, tmp_path):
        cfg = {"scenario": "brake", "record_stride": 20}
        values = [0.10, 0.12, 0.14, 0.16, 0.18, 0.20]
        reports = execute_sweep(cfg, "plant.mode", values, tmp_path,
                                plots=False)
        distances = [rep["metrics"]["distance"] for rep in reports]
        lo, hi = min(distances), max(distances)
        # the reported baseline range brackets the sweep, within tolerance
        assert hi <= 57.52 * 1.05 and lo >= 55.32 * 0.95
        assert distances[0] == hi  # 0.1 is the worst of the swept targets


class TestListScenarios:
    def test_lists_all_ids(self):
        result = CliRunner().invoke(main, ["list-scenarios"])
        assert result.exit_code == 0
        for sid in ("sine", "brake", "neuro"):
            assert sid in result.output


class TestAcceptCommand:
    def test_only_filter_runs_single_criterion(self):
        result = CliRunner().invoke(main, ["accept", "--only", "A7"])
        assert result.exit_code == 0, result.output
        assert "A7" in result.output and "PASS" in result.output

    def test_unknown_criterion_rejected(self):
        result = CliRunner().invoke(main, ["accept", "--only", "Z9"])
        assert result.exit_code != 0

    def test_corrupted_tolerance_fails_and_names_criterion(self, monkeypatch):
        monkeypatch.setitem(accept.DEFAULT_TOLERANCES, "gramian_abs", 1e-30)
        result = CliRunner().invoke(main, ["accept", "--only", "A7"])
        assert result.exit_code == 1
        assert "A7" in result.output and "FAIL" in result.output

    def test_tolerance_override_api(self):
        results = accept.run_acceptance(only="A7",
                                        tolerances={"gramian_abs": 1e-30})
        assert not results[0].passed
        with pytest.raises(KeyError):
            accept.run_acceptance(only="A7", tolerances={"nope": 1.0})
