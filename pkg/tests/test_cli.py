import csv
import json

import pytest

from hysterix.cli import main
from hysterix.config import ConfigError, RunConfig, apply_overrides, default_config_dict, load_config


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# --------------------------------------------------------------------- config


def test_default_config_expands_presets():
    cfg = load_config(None)
    assert cfg.plant["f1"] == ["x1 + x2 + theta*x1^2"]
    assert cfg.local["v_ell"] == 0.1042 and cfg.local["v_ell_tilde"] == 0.05
    assert cfg.synthesis["a"] == 10.0 and cfg.synthesis["c"] == 10.0
    assert cfg.ics() == [((0.5, 0.1), 1)]


def test_config_round_trip(tmp_path):
    cfg = load_config(None, ["local.v_ell=0.2", "initial_conditions=[{\"x\": [1, 2], \"q\": 2}]"])
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    again = load_config(path)
    assert again == cfg
    assert RunConfig.from_dict(again.to_dict()) == again


def test_overrides():
    d = apply_overrides(default_config_dict(), ["synthesis.c=\"auto\"", "initial_conditions.0.q=2",
                                                "plant.theta=0.01"])
    assert d["synthesis"]["c"] == "auto"
    assert d["initial_conditions"][0]["q"] == 2
    assert d["plant"]["theta"] == 0.01
    with pytest.raises(ConfigError):
        apply_overrides(d, ["novalue"])
    with pytest.raises(ConfigError):
        apply_overrides(d, ["initial_conditions.7.q=1"])


def test_preset_theta_override_reaches_plant():
    cfg = load_config(None, ['plant={"preset": "paper_example", "theta": 0.01}'])
    assert cfg.build_plant().params["theta"] == 0.01


@pytest.mark.parametrize(
    "overrides",
    [
        ["initial_conditions=[]"],
        ["local.v_ell_tilde=0.2"],
        ["synthesis.a=-1"],
        ["controller.type=\"bogus\""],
        ["initial_conditions=[{\"x\": [1]}]"],
        ["integrator.rel_tol=0"],
    ],
)
def test_invalid_configs(overrides):
    with pytest.raises(ConfigError):
        load_config(None, overrides)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_edited_preset_is_no_longer_builtin():
    cfg = load_config(None, ['plant.f2="x1"'])
    assert cfg.build_plant().name == "custom"


# --------------------------------------------------------------------- commands


def test_simulate_writes_artifacts(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--out", str(tmp_path))
    assert code == 0
    assert "converged" in out
    with open(tmp_path / "run_ic0.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "j", "q", "x1_1", "x2", "u", "V1", "V", "V_ell"]
    summary = json.loads((tmp_path / "run_ic0_summary.json").read_text())
    assert summary["termination"] == "converged"
    assert [(j["q_from"], j["q_to"]) for j in summary["jumps"]] == [(1, 2), (2, 1)]


def test_simulate_empty_ics_is_config_error(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "--out", str(tmp_path), "--set", "initial_conditions=[]")
    assert code == 2 and "initial_conditions" in err


def test_simulate_classical_baseline(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--out", str(tmp_path),
                       "--set", 'plant={"preset": "preliminary_example"}',
                       "--set", 'controller.type="classical"',
                       "--set", 'initial_conditions=[{"x": [1, 1]}]')
    assert code == 0
    summary = json.loads((tmp_path / "run_ic0_summary.json").read_text())
    assert summary["termination"] == "converged" and summary["jumps"] == []


def test_simulate_classical_needs_unperturbed_plant(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", "--out", str(tmp_path), "--set", 'controller.type="classical"')
    assert code == 2


def test_simulate_escape_exit_code(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", "--out", str(tmp_path),
                     "--set", 'plant.f1=["x1^2 + x2"]', "--set", 'controller.type="local"',
                     "--set", 'local.phi_ell="0"', "--set", 'initial_conditions=[{"x": [1, 0]}]')
    assert code == 3


def test_verify_default_passes(capsys):
    code, out, _ = run(capsys, "verify")
    assert code == 0 and "all checks passed" in out


def test_verify_writes_json(tmp_path, capsys):
    code, _, _ = run(capsys, "verify", "--out", str(tmp_path), "--samples", "2000")
    data = json.loads((tmp_path / "verify.json").read_text())
    assert code == 0 and data["passed"]


@pytest.mark.parametrize(
    "overrides, failing",
    [
        (['plant.f2="x1"'], "f2_nonvanishing"),
        (['local.phi_ell="0"'], "local_decrease"),
        (["local.v_ell=1e-5", "local.v_ell_tilde=5e-6"], "attractor_in_local"),
    ],
)
def test_verify_negative_controls(tmp_path, capsys, overrides, failing):
    argv = ["verify", "--out", str(tmp_path)]
    for o in overrides:
        argv += ["--set", o]
    code, out, _ = run(capsys, *argv)
    assert code == 1
    data = json.loads((tmp_path / "verify.json").read_text())
    entry = next(e for e in data["entries"] if e["name"] == failing)
    assert not entry["passed"] and entry["witness"] is not None


def test_verify_low_v_ell_without_gap_is_config_error(capsys):
    code, _, _ = run(capsys, "verify", "--set", "local.v_ell=1e-5")
    assert code == 2


def test_seed_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("HYSTERIX_SEED", "7")
    run(capsys, "verify", "--out", str(tmp_path), "--seed", "1", "--samples", "1000")
    env_run = (tmp_path / "verify.json").read_text()
    monkeypatch.delenv("HYSTERIX_SEED")
    run(capsys, "verify", "--out", str(tmp_path), "--seed", "7", "--samples", "1000")
    assert (tmp_path / "verify.json").read_text() == env_run
    monkeypatch.setenv("HYSTERIX_SEED", "x")
    assert main(["verify"]) == 2


def test_synthesize(tmp_path, capsys):
    code, out, _ = run(capsys, "synthesize", "--out", str(tmp_path))
    assert code == 0
    data = json.loads((tmp_path / "synthesis.json").read_text())
    assert data["k"] == pytest.approx(0.2, abs=3e-6)
    assert data["K_alpha"] == pytest.approx(2.004) and data["c_g"] == 1.0 and data["c"] == 10.0
    assert "phi_g" in data and "phi_g" in out


def test_synthesize_auto_c_and_toy(tmp_path, capsys):
    code, _, _ = run(capsys, "synthesize", "--out", str(tmp_path), "--set", 'synthesis.c="auto"')
    data = json.loads((tmp_path / "synthesis.json").read_text())
    assert code == 0 and data["c"] == pytest.approx(1.01 * data["c_g"])
    code, _, _ = run(capsys, "synthesize", "--out", str(tmp_path), "--set", "certificate.M=1",
                     "--set", "synthesis.a=1")
    data = json.loads((tmp_path / "synthesis.json").read_text())
    assert code == 0 and data["k"] == 4.0


@pytest.mark.parametrize("overrides", [["synthesis.a=1e-300"], ["certificate.M=1e20"]])
def test_synthesize_degenerate(capsys, overrides):
    argv = ["synthesize"]
    for o in overrides:
        argv += ["--set", o]
    code, _, err = run(capsys, *argv)
    assert code == 1 and "synthesis failed" in err


def test_reproduce_paper(tmp_path, capsys):
    code, out, _ = run(capsys, "reproduce-paper", "--out", str(tmp_path), "--no-plot")
    assert code == 0
    assert "derived: t* = " in out and "paper-literal: t* = " in out
    blocks = (tmp_path / "fig1_data.dat").read_text().split("\n\n\n")
    assert [b.splitlines()[0] for b in blocks] == ["# t x1", "# t x2", "# t q"]
    summary = json.loads((tmp_path / "paper_summary.json").read_text())
    assert summary["variants"]["derived"]["termination"] == "converged"


def test_reproduce_paper_plot(tmp_path, capsys):
    code, _, _ = run(capsys, "reproduce-paper", "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "fig1.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_parse_check(capsys):
    code, out, _ = run(capsys, "parse-check", "x1^2 + sin(x2)", "--diff", "--at", '{"x1": 2, "x2": 0}')
    assert code == 0 and "value: 4.0" in out and "d/dx1" in out
    code, out, _ = run(capsys, "parse-check", "x1^y")
    assert code == 1 and "offset 3" in out
    code, out, _ = run(capsys, "parse-check", "x1 + z", "--vars", "x1,x2")
    assert code == 1 and "unknown identifier" in out


def test_parse_check_config(tmp_path, capsys):
    code, _, _ = run(capsys, "parse-check")
    assert code == 0
    code, _, err = run(capsys, "parse-check", "--set", 'plant.f2="1 +"')
    assert code == 2 and "plant" in err
