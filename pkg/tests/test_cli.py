"""Command-line interface: subcommands, outputs, exit codes, determinism."""

import json
import os

import pytest

from conftest import CASE_PATH
from gridrisk.cli import (
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_UNCONVERGED,
    EXIT_USAGE,
    main,
)


def run_cli(*args):
    return main(list(args))


def test_validate_case_ok(capsys):
    assert run_cli("validate-case", CASE_PATH) == EXIT_OK
    out = capsys.readouterr().out
    assert "39 buses" in out
    assert "6097.1 MW" in out


def test_validate_case_missing_file(tmp_path, capsys):
    assert run_cli("validate-case", str(tmp_path / "nope.json")) == EXIT_USAGE


def test_validate_case_invalid(tmp_path, capsys):
    doc = json.load(open(CASE_PATH))
    doc["buses"][1]["kind"] = "slack"
    doc["buses"][1]["v_setpoint"] = 1.0
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    assert run_cli("validate-case", str(p)) == EXIT_USAGE
    assert "multiple slack" in capsys.readouterr().out


def test_powerflow_command(tmp_path, capsys):
    out = tmp_path / "pf.csv"
    assert run_cli("powerflow", CASE_PATH, "--out", str(out)) == EXIT_OK
    lines = out.read_text().strip().split("\n")
    assert len(lines) == 40  # header + 39 buses
    assert "converged" in capsys.readouterr().out


def test_powerflow_tolerance_passthrough(tmp_path, capsys):
    out = tmp_path / "pf.csv"
    assert run_cli("powerflow", CASE_PATH, "--tol", "1e-9",
                   "--out", str(out)) == EXIT_OK
    text = capsys.readouterr().out
    mismatch = float(text.split("max mismatch")[1].split("pu")[0])
    assert mismatch <= 1e-9


def test_powerflow_missing_case(capsys):
    assert run_cli("powerflow", "no-such-case.json") == EXIT_USAGE


def test_simulate_no_fault(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    assert run_cli("simulate", CASE_PATH, "--t-end", "3.0",
                   "--out", str(out)) == EXIT_OK
    text = capsys.readouterr().out
    assert "sev_angle        : 0.0000" in text
    assert "sev_frequency    : 0.0000" in text
    header = out.read_text().split("\n")[0]
    assert header.startswith("time_s,delta_deg:G1")


def test_simulate_fault_reports_metrics(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    rc = run_cli("simulate", CASE_PATH, "--line", "21", "--fault-type", "LLL",
                 "--location", "50", "--fct", "0.1", "--out", str(out))
    assert rc == EXIT_OK
    text = capsys.readouterr().out
    assert "tsi" in text
    tsi = float(text.split("tsi              :")[1].split("\n")[0])
    assert tsi > 0.0


def test_simulate_divergence_is_a_result(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    rc = run_cli("simulate", CASE_PATH, "--line", "21", "--fault-type", "LLL",
                 "--fct", "9.0", "--no-trip", "--out", str(out))
    assert rc == EXIT_OK
    text = capsys.readouterr().out
    assert "diverged" in text
    assert "sev_angle        : 1.0000" in text


def test_mc_outputs_and_manifest(tmp_path, capsys):
    outdir = tmp_path / "mc"
    rc = run_cli("mc", CASE_PATH, "--n-max", "8", "--check-every", "8",
                 "--seed", "5", "--outdir", str(outdir))
    assert rc == EXIT_UNCONVERGED  # tiny run cannot converge
    for name in ("samples.csv", "summary.json", "histogram.csv", "manifest.json"):
        assert (outdir / name).exists()
    manifest = json.load(open(outdir / "manifest.json"))
    assert manifest["settings"]["seed"] == 5
    assert "config_sha256" in manifest
    assert sorted(manifest["files"]) == ["histogram.csv", "samples.csv", "summary.json"]
    summary = json.load(open(outdir / "summary.json"))
    assert summary["g"] == max(summary["r_am"], summary["r_vm"], summary["r_fm"])
    text = capsys.readouterr().out
    assert "G                :" in text


def test_mc_seed_reproducibility(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for outdir in (a, b):
        run_cli("mc", CASE_PATH, "--n-max", "6", "--check-every", "6",
                "--seed", "9", "--outdir", str(outdir))
    assert (a / "samples.csv").read_bytes() == (b / "samples.csv").read_bytes()
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()


def test_mc_config_file_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_max": 4, "seed": 77, "check_every": 4}))
    outdir = tmp_path / "mc"
    run_cli("mc", CASE_PATH, "--config", str(cfg), "--outdir", str(outdir))
    manifest = json.load(open(outdir / "manifest.json"))
    assert manifest["settings"]["n_max"] == 4
    assert manifest["settings"]["seed"] == 77
    # flag beats config file
    outdir2 = tmp_path / "mc2"
    run_cli("mc", CASE_PATH, "--config", str(cfg), "--seed", "78",
            "--outdir", str(outdir2))
    manifest2 = json.load(open(outdir2 / "manifest.json"))
    assert manifest2["settings"]["seed"] == 78


def test_sweep_degenerate_load_point_matches_mc(tmp_path):
    mc_dir = tmp_path / "mc"
    run_cli("mc", CASE_PATH, "--n-max", "6", "--check-every", "6", "--seed", "4",
            "--outdir", str(mc_dir))
    sweep_dir = tmp_path / "sweep"
    rc = run_cli("sweep", CASE_PATH, "--axis", "load", "--points", "1.0",
                 "--n-max", "6", "--check-every", "6", "--seed", "4",
                 "--outdir", str(sweep_dir))
    assert rc == EXIT_OK
    curve = (sweep_dir / "curve.csv").read_text().strip().split("\n")
    assert curve[0] == "point,g,r_am,r_vm,r_fm,n_samples"
    assert len(curve) == 2
    summary = json.load(open(mc_dir / "summary.json"))
    g_curve = float(curve[1].split(",")[1])
    assert g_curve == pytest.approx(summary["g"], rel=1e-9)


def test_sweep_rejects_unknown_penetration(tmp_path, capsys):
    rc = run_cli("sweep", CASE_PATH, "--axis", "penetration", "--points", "33",
                 "--n-max", "4", "--outdir", str(tmp_path / "s"))
    assert rc == EXIT_NUMERICAL or rc == EXIT_USAGE


def test_usage_error_on_bad_args():
    assert run_cli("simulate") == EXIT_USAGE
    assert run_cli("definitely-not-a-command") == EXIT_USAGE


def test_defaults_reproduce_study_settings():
    from gridrisk.cli import DEFAULTS

    assert DEFAULTS["t_apply"] == 1.0
    assert DEFAULTS["fct_mean"] == 0.2
    assert DEFAULTS["fct_std"] == 0.005
    assert DEFAULTS["t_end"] == 10.0
    assert DEFAULTS["n_max"] == 30000
    assert DEFAULTS["voltage_threshold"] == 0.05
    assert DEFAULTS["frequency_threshold"] == 0.5


def test_mc_worker_flag_identical_outputs(tmp_path):
    a, b = tmp_path / "w1", tmp_path / "w8"
    run_cli("mc", CASE_PATH, "--n-max", "6", "--check-every", "6", "--seed", "3",
            "--workers", "1", "--outdir", str(a))
    run_cli("mc", CASE_PATH, "--n-max", "6", "--check-every", "6", "--seed", "3",
            "--workers", "8", "--outdir", str(b))
    assert (a / "samples.csv").read_bytes() == (b / "samples.csv").read_bytes()
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()


def test_scenario_in_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "n_max": 4, "check_every": 4, "seed": 1,
        "scenario": [{"kind": "wind_penetration", "replaced": ["G1", "G3"]}],
    }))
    outdir = tmp_path / "mc"
    rc = run_cli("mc", CASE_PATH, "--config", str(cfg), "--outdir", str(outdir))
    assert rc in (EXIT_OK, EXIT_UNCONVERGED)
    assert (outdir / "summary.json").exists()
