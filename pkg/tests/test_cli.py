from __future__ import annotations

import hashlib
import json
import subprocess
import sys

import pytest
import yaml

from jpgsim import cli


def run(tmp_path, command, *args, name="out"):
    out = tmp_path / name
    code = cli.main([command, "--out", str(out), *args])
    return code, out


def payloads(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "manifest.json"}


def test_config_defaults_and_overrides():
    cfg = cli.load_config(None, ["experiment.rb.shots=200", "seed=5"])
    assert cfg.experiment.rb.shots == 200
    assert cfg.seed == 5
    assert cfg.device.n_junctions == 4650


def test_unknown_key_rejected_with_path(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text(yaml.safe_dump({"experiment": {"iv": {"n_point": 3}}}))
    with pytest.raises(cli.ConfigError, match=r"experiment\.iv\.n_point"):
        cli.load_config(str(p))


def test_malformed_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("device:\n  critical_current: -1\n")
    code, _ = run(tmp_path, "iv", "--config", str(p))
    assert code == 2
    assert "device.critical_current" in capsys.readouterr().err


def test_invalid_yaml_exit_code(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("device: [unclosed\n")
    assert run(tmp_path, "iv", "--config", str(p))[0] == 2


def test_rb_lengths_validation(tmp_path, capsys):
    code, _ = run(tmp_path, "rb", "--set", "experiment.rb.lengths=[5,3,8,9]")
    assert code == 2
    assert "experiment.rb" in capsys.readouterr().err


def test_empty_sigma_list_rejected(tmp_path):
    assert run(tmp_path, "gate-sweep", "--set", "experiment.gate_sweep.sigma_over_Tq=[]")[0] == 2


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    from jpgsim.jj_core import FitError

    def boom(cfg, out, threads):
        raise FitError("forced")

    monkeypatch.setitem(cli.COMMANDS, "rb", boom)
    assert run(tmp_path, "rb")[0] == 3


def test_iv_zero_drive_reports_no_plateau(tmp_path):
    code, out = run(tmp_path, "iv", "--set", "experiment.iv.drive_amplitude=0", "--set", "experiment.iv.n_points=7",
                    "--set", "experiment.iv.n_periods=8")
    assert code == 0
    rep = json.loads((out / "locking.json").read_text())
    assert rep["has_plateau"] is False
    assert rep["shapiro_voltage_V"] == pytest.approx(4650 * 2.067833848e-15 * 2.679e9)


def test_manifest_lists_checksums(tmp_path):
    code, out = run(tmp_path, "readout", "--set", "experiment.readout.n_shots=2000")
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "readout"
    assert man["seed"] == 0
    assert man["version"]
    names = {f["path"] for f in man["files"]}
    assert names == {"readout_shots.csv", "readout.json"}
    for f in man["files"]:
        assert f["sha256"] == hashlib.sha256((out / f["path"]).read_bytes()).hexdigest()
    assert man["config_hash"] == cli.config_hash(cli.RunConfig.model_validate(man["config"]))


def test_readout_zero_noise_and_warning(tmp_path):
    code, out = run(tmp_path, "readout", "--set", "experiment.readout.zero_noise=true",
                    "--set", "experiment.readout.p_th_true=0.0")
    assert code == 0
    rep = json.loads((out / "readout.json").read_text())
    assert rep["p_th"] == pytest.approx(0.0, abs=1e-12)
    with pytest.warns(UserWarning):
        code, out = run(tmp_path, "readout", "--set", "experiment.readout.n_shots=500", name="few")
    assert code == 0
    assert json.loads((out / "readout.json").read_text())["notes"]


def test_rb_noiseless_and_rescale(tmp_path):
    code, out = run(tmp_path, "rb", "--set", "experiment.rb.r_injected=0", "--set",
                    "experiment.rb.sequences_per_length=3")
    assert code == 0
    rep = json.loads((out / "rb.json").read_text())
    assert rep["fit"]["params"]["p"] == 1.0
    lines = (out / "rb.csv").read_text().splitlines()
    assert lines[0] == "m,m_rescaled,sequence_fidelity"
    m, mr, _ = map(float, lines[5].split(","))
    assert mr == 1.125 * m


def test_budget_all_terms_off_is_zero(tmp_path):
    code, out = run(tmp_path, "budget", "--set", "experiment.budget.terms=[]")
    assert code == 0
    rep = json.loads((out / "budget.json").read_text())
    assert rep["budget"]["total"]["value"] == 0.0
    power = json.loads((out / "power.json").read_text())
    assert power["on_chip_power"] == pytest.approx(1.6e-6, rel=0.02)


def test_budget_schema_stable(tmp_path):
    args = ["--set", "experiment.budget.terms=[digitization,leakage,coherence]"]
    _, a = run(tmp_path, "budget", *args, name="a")
    _, b = run(tmp_path, "budget", *args, name="b")
    assert payloads(a) == payloads(b)
    keys = set(json.loads((a / "budget.json").read_text())["budget"])
    assert keys == {"digitization", "pulse_width", "leakage", "jitter", "coherence", "total"}


def test_gate_sweep_delta_limit(tmp_path):
    code, out = run(tmp_path, "gate-sweep", "--set", "experiment.gate_sweep.sigma_over_Tq=[0.005,0.19]")
    assert code == 0
    pts = json.loads((out / "gate_sweep.json").read_text())["points"]
    assert abs(pts[0]["nu_pi"] - 100) <= 1
    assert pts[1]["nu_pi"] > pts[0]["nu_pi"]


def test_rabi_single_bias(tmp_path):
    code, out = run(tmp_path, "rabi", "--set", "experiment.rabi.single_bias=1.9e-3")
    assert code == 0
    rep = json.loads((out / "rabi_fits.json").read_text())
    assert rep["nu_pi_for_gates"] == 352


def test_rsj_pulse(tmp_path):
    code, out = run(tmp_path, "rsj-pulse")
    assert code == 0
    rep = json.loads((out / "pulse_fits.json").read_text())
    assert rep["area_over_phi0"] == pytest.approx(1.0, abs=0.01)


def test_stats_deterministic_across_threads(tmp_path):
    args = ["--set", "experiment.stats.n_repeats=20", "--seed", "4"]
    _, a = run(tmp_path, "stats", *args, name="a")
    _, b = run(tmp_path, "stats", *args, "--threads", "3", name="b")
    assert payloads(a) == payloads(b)


def test_stats_single_repeat(tmp_path):
    code, out = run(tmp_path, "stats", "--set", "experiment.stats.n_repeats=1")
    assert code == 0
    rep = json.loads((out / "stats.json").read_text())
    assert rep["t1"]["params"]["T1_std"] == 0.0


def test_manifest_config_round_trip(tmp_path):
    _, a = run(tmp_path, "rb", "--set", "experiment.rb.sequences_per_length=4", "--seed", "9", name="a")
    cfg_path = tmp_path / "echo.json"
    cfg_path.write_text(json.dumps(json.loads((a / "manifest.json").read_text())["config"]))
    _, b = run(tmp_path, "rb", "--config", str(cfg_path), name="b")
    assert payloads(a) == payloads(b)


def test_env_var_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert cli.main(["readout", "--set", "experiment.readout.n_shots=1000"]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "jpgsim", "readout", "--out", str(tmp_path / "m"), "--set",
                          "experiment.readout.n_shots=1000"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert json.loads(res.stdout)["command"] == "readout"
