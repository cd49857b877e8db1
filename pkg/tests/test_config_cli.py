"""Configuration parsing, round-trips, and the command-line surface."""

import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest
import yaml

from rydmimo.config import (
    apply_overrides,
    default_config_dict,
    parse_angular,
    parse_config_dict,
    parse_power,
)

TWO_PI = 2.0 * math.pi


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "rydmimo.cli", *args],
                          capture_output=True, text=True)


@pytest.fixture()
def config_file(tmp_path):
    raw = default_config_dict()
    raw["optimizer"]["max_iterations"] = 25
    raw["campaign"]["num_trials"] = 1
    raw["map"]["points"] = 4
    path = tmp_path / "config.yaml"
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(raw, fh, sort_keys=False)
    return path


class TestValueParsing:
    def test_angular_two_pi_strings(self):
        assert parse_angular("2pi*8.08e6") == pytest.approx(TWO_PI * 8.08e6)
        assert parse_angular("2pi*-30") == pytest.approx(-TWO_PI * 30.0)
        assert parse_angular("2*pi*2.05 MHz") == pytest.approx(TWO_PI * 2.05e6)
        assert parse_angular(123.0) == 123.0
        with pytest.raises(ValueError):
            parse_angular("threepi")

    def test_power_units(self):
        assert parse_power("30 dBm") == pytest.approx(1.0)
        assert parse_power("0 dBm") == pytest.approx(1e-3)
        assert parse_power(0.25) == 0.25
        with pytest.raises(ValueError):
            parse_power(-1.0)
        with pytest.raises(ValueError):
            parse_power("one watt")


class TestConfigParsing:
    def test_default_config_parses(self):
        cfg = parse_config_dict(default_config_dict())
        assert cfg.atomic.num_bands == 2
        assert cfg.atomic.omega_p == pytest.approx(TWO_PI * 8.08e6)
        assert len(cfg.band_front_ends) == 2
        assert cfg.campaign.power_grid == (pytest.approx(0.01),)
        assert cfg.noise.sigma_e2 > 0

    def test_round_trip_through_yaml(self):
        raw = default_config_dict()
        text = yaml.safe_dump(raw, sort_keys=False)
        reparsed_raw = yaml.safe_load(text)
        assert reparsed_raw == raw
        cfg1 = parse_config_dict(raw)
        cfg2 = parse_config_dict(reparsed_raw)
        assert cfg1.to_dict() == cfg2.to_dict()
        assert cfg1.atomic.omega_p == cfg2.atomic.omega_p
        np.testing.assert_array_equal(cfg1.atomic.mu_rf, cfg2.atomic.mu_rf)
        assert cfg1.campaign.power_grid == cfg2.campaign.power_grid
        assert cfg1.campaign.schemes == cfg2.campaign.schemes
        assert cfg1.band_front_ends == cfg2.band_front_ends
        assert cfg1.solver.epsilon == cfg2.solver.epsilon
        np.testing.assert_array_equal(cfg1.solver.e_lo_init, cfg2.solver.e_lo_init)

    @pytest.mark.parametrize("block,key", [
        (None, "unknown_top"),
        ("atomic", "rabi_frequency"),
        ("noise", "psd_model"),
        ("channel", "rician_k"),
        ("optimizer", "learning_rate"),
        ("campaign", "warmup"),
        ("map", "resolution"),
    ])
    def test_unknown_keys_rejected(self, block, key):
        raw = default_config_dict()
        if block is None:
            raw[key] = 1
        else:
            raw[block][key] = 1
        with pytest.raises(ValueError, match="unknown key"):
            parse_config_dict(raw)

    def test_band_count_mismatch_rejected(self):
        raw = default_config_dict()
        raw["bands"] = raw["bands"][:1]
        with pytest.raises(ValueError):
            parse_config_dict(raw)

    def test_overrides(self):
        raw = default_config_dict()
        out = apply_overrides(raw, ["optimizer.epsilon=1e-2",
                                    "bands.0.f_c=7.0e9",
                                    "campaign.schemes=[qFDMA-Opt]"])
        cfg = parse_config_dict(out)
        assert cfg.solver.epsilon == pytest.approx(1e-2)
        assert cfg.band_front_ends[0].f_c == pytest.approx(7.0e9)
        assert cfg.campaign.schemes == ("qFDMA-Opt",)
        assert raw["optimizer"]["epsilon"] == 1e-3  # original untouched


class TestCli:
    def test_init_config_writes_parseable_yaml(self, tmp_path):
        path = tmp_path / "default.yaml"
        proc = run_cli("init-config", str(path))
        assert proc.returncode == 0
        with open(path, encoding="utf-8") as fh:
            parse_config_dict(yaml.safe_load(fh))

    def test_map_command(self, config_file, tmp_path):
        out = tmp_path / "map_out"
        proc = run_cli("map", "--config", str(config_file),
                       "--out-dir", str(out))
        assert proc.returncode == 0, proc.stderr
        csv_path = out / "transconductance_map.csv"
        with open(csv_path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["e_lo_1", "e_lo_2", "t_p", "g_q_1", "g_q_2"]
        assert len(rows) == 1 + 16  # header + 4x4 grid
        values = np.array([[float(c) for c in row] for row in rows[1:]])
        assert np.all(np.isfinite(values))
        # full-double-precision round trip through the CSV text
        assert values[0, 2] == float(rows[1][2])
        for name in ("map_transmission.png", "map_gq1.png", "map_gq2.png",
                     "transconductance_map.meta.json"):
            assert (out / name).exists()

    def test_map_is_deterministic(self, config_file, tmp_path):
        out1, out2 = tmp_path / "m1", tmp_path / "m2"
        assert run_cli("map", "--config", str(config_file),
                       "--out-dir", str(out1)).returncode == 0
        assert run_cli("map", "--config", str(config_file),
                       "--out-dir", str(out2)).returncode == 0
        t1 = (out1 / "transconductance_map.csv").read_text()
        t2 = (out2 / "transconductance_map.csv").read_text()
        assert t1 == t2

    def test_map_requires_two_bands(self, config_file, tmp_path):
        proc = run_cli("map", "--config", str(config_file),
                       "--out-dir", str(tmp_path / "x"),
                       "--override", "atomic.num_bands=1",
                       "--override", "atomic.delta_rf=[2pi*10]",
                       "--override", "atomic.gamma=[2pi*5.2e6,2pi*3.9e3,2pi*1.7e3]",
                       "--override", "atomic.mu_rf_ea0=[2500]",
                       "--override", "lo.e_lo_init=[10e-3]")
        assert proc.returncode == 2

    def test_solve_with_huge_epsilon_has_one_iteration_row(self, config_file,
                                                           tmp_path):
        out = tmp_path / "solve_out"
        proc = run_cli("solve", "--config", str(config_file),
                       "--out-dir", str(out),
                       "--override", "optimizer.epsilon=1e6")
        assert proc.returncode == 0, proc.stderr
        with open(out / "trajectory.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        iteration_rows = [r for r in rows if r["row_kind"] == "iteration"]
        summary_rows = [r for r in rows if r["row_kind"] == "summary"]
        assert len(iteration_rows) == 1
        assert len(summary_rows) == 1
        assert summary_rows[0]["converged"] == "True"

    def test_solve_trajectory_wse_monotone(self, config_file, tmp_path):
        out = tmp_path / "solve_mono"
        proc = run_cli("solve", "--config", str(config_file),
                       "--out-dir", str(out),
                       "--override", "optimizer.max_iterations=40")
        assert proc.returncode == 0, proc.stderr
        with open(out / "trajectory.csv", newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.DictReader(fh) if r["row_kind"] == "iteration"]
        wse = np.array([float(r["wse"]) for r in rows])
        assert np.all(np.diff(wse) >= -1e-9 * np.abs(wse[:-1]))
        assert (out / "trajectory.png").exists()

    def test_campaign_command(self, config_file, tmp_path):
        out = tmp_path / "camp_out"
        proc = run_cli("campaign", "--config", str(config_file),
                       "--out-dir", str(out),
                       "--override", "campaign.num_trials=2")
        assert proc.returncode == 0, proc.stderr
        with open(out / "campaign_aggregate.csv", newline="",
                  encoding="utf-8") as fh:
            aggs = list(csv.DictReader(fh))
        assert {a["scheme"] for a in aggs} == {"qSDMA-Opt", "qSDMA-NoOpt"}
        gap = (float(aggs[0]["wse_mean"]) - float(aggs[1]["wse_mean"]))
        assert gap > 0  # paired dominance aggregated
        report = json.loads((out / "run_report.json").read_text())
        assert report["num_failed"] == 0
        assert (out / "campaign_wse.png").exists()
        assert (out / "campaign_sum_rate.png").exists()

    def test_bad_config_exits_nonzero(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("atomic: {}\n")
        proc = run_cli("solve", "--config", str(bad),
                       "--out-dir", str(tmp_path / "o"))
        assert proc.returncode == 2
        assert "error" in proc.stderr.lower()
