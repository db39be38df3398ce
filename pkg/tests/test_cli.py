import json
import re
import subprocess
import sys

import pytest

from ripgate.cli import main
from ripgate.lindblad import read_series_csv


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out.strip().splitlines()
    return code, json.loads(out[-1]) if out else None


def strip_created(text):
    return re.sub(r'"created": "[^"]*"', '"created": ""', text)


def test_derive_params(capsys, tmp_path):
    code, summary = run(capsys, "derive-params", "--preset", "low", "--delta-mhz", 10, "--out", tmp_path)
    assert code == 0
    assert summary["zeta0_mhz"] == pytest.approx(0.694, abs=1e-3)
    data = json.loads((tmp_path / "derived_params.json").read_text())
    assert set(data["zeta_vs_photons"]) == {"0", "5", "50"}
    assert data["header"]["command"] == "derive-params"


def test_respond_writes_series(capsys, tmp_path):
    code, summary = run(capsys, "respond", "--delta-mhz", 10, "--eps-mhz", 20, "--t-end-ns", 100,
                        "--grid-ns", 5, "--out", tmp_path)
    assert code == 0
    data = read_series_csv(tmp_path / "response.csv")
    assert data["t_ns"].size == 21
    assert data["nbar"].max() == pytest.approx(summary["nbar_max"], rel=1e-15)
    assert data["theta_rad"][-1] == pytest.approx(summary["theta_end_rad"], rel=1e-15)


def test_steady_state(capsys, tmp_path):
    code, summary = run(capsys, "steady-state", "--delta-mhz", 10, "--eps-mhz", 20, "--out", tmp_path)
    assert code == 0
    assert summary["theta_dot_rad_per_ns"] < 0
    assert (tmp_path / "steady_state.json").exists()


def test_unknown_flag_is_usage_error(capsys, tmp_path):
    code, err = run(capsys, "respond", "--delta-mhz", 10, "--bogus", "--out", tmp_path)
    assert code == 2
    assert err["error"] == "usage_error"
    assert "--bogus" in err["message"]


def test_missing_subcommand(capsys):
    code, err = run(capsys)
    assert code == 2


def test_degenerate_device_reports_error(capsys, tmp_path):
    run(capsys, "derive-params", "--out", tmp_path)
    dev = json.loads((tmp_path / "derived_params.json").read_text())["device"]
    dev["omega1_mhz"] = dev["omegar_mhz"]
    (tmp_path / "bad.json").write_text(json.dumps(dev))
    code, err = run(capsys, "derive-params", "--params", tmp_path / "bad.json", "--out", tmp_path)
    assert code == 1
    assert err["error"] == "degenerate_denominator"
    assert err["message"]


def test_config_file_overrides_defaults(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"delta_mhz": 10.0, "eps_mhz": 5.0}))
    code, a = run(capsys, "steady-state", "--config", cfg, "--out", tmp_path)
    assert code == 0
    code, b = run(capsys, "steady-state", "--delta-mhz", 10, "--eps-mhz", 5, "--out", tmp_path)
    assert a == b
    cfg.write_text(json.dumps({"nope": 1}))
    code, err = run(capsys, "steady-state", "--config", cfg, "--out", tmp_path)
    assert code == 2


def test_repeat_runs_are_identical(capsys, tmp_path):
    for name in ("a", "b"):
        code, _ = run(capsys, "respond", "--envelope", "spline", "--rise-ns", 30, "--delta-mhz", 20,
                      "--eps-mhz", 15, "--out", tmp_path / name)
        assert code == 0
    a = (tmp_path / "a" / "response.csv").read_text()
    b = (tmp_path / "b" / "response.csv").read_text()
    assert a.splitlines()[1:] == b.splitlines()[1:]
    assert strip_created(a.splitlines()[0]).replace("/a", "") == strip_created(b.splitlines()[0]).replace("/b", "")


def test_spline_requires_rise(capsys, tmp_path):
    code, err = run(capsys, "respond", "--envelope", "spline", "--delta-mhz", 10, "--out", tmp_path)
    assert code == 2


def test_design_spline_fixed_detuning(capsys, tmp_path):
    code, summary = run(capsys, "design-spline", "--preset", "high", "--degree", 7, "--eps-mhz", 284,
                        "--delta-mhz", 57, "--out", tmp_path)
    assert code == 0
    assert (tmp_path / "design.json").exists()


def test_console_script_entry():
    proc = subprocess.run([sys.executable, "-m", "ripgate.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip()
