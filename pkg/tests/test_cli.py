import json
import subprocess
import sys

import pytest

from malalimit.cli import build_parser, parse_and_dispatch
from malalimit.experiments import ExperimentPlan


@pytest.fixture(autouse=True)
def out_env(tmp_path, monkeypatch):
    monkeypatch.setenv("MALALIMIT_OUTPUT", str(tmp_path / "out"))
    return tmp_path / "out"


def test_ode_equilibrium(out_env, capsys):
    assert parse_and_dispatch(["ode", "--S0", "1", "--ell", "1", "--T", "5"]) == 0
    assert "S(5) = 1.0" in capsys.readouterr().out
    lines = (out_env / "ode.csv").read_text().splitlines()
    assert lines[0] == "t,S" and len(lines) == 5002


def test_sample_rejects_kappa(capsys):
    assert parse_and_dispatch(["sample", "--kappa", "0.4", "--N", "64"]) == 1
    err = capsys.readouterr().err
    assert "kappa" in err and "trace class" in err and "1/2" in err


@pytest.mark.parametrize("argv,field", [
    (["sample", "--s", "0.6"], "s"),
    (["sample", "--zeta", "0"], "zeta"),
    (["ode", "--S0", "-1"], "S0"),
    (["sample", "--N", "64", "128"], "N"),
    (["ode", "--T", "abc"], "T"),
])
def test_validation_names_field(argv, field, capsys):
    assert parse_and_dispatch(argv) == 1
    assert f"invalid {field}:" in capsys.readouterr().err


def test_unreadable_config(tmp_path, capsys):
    assert parse_and_dispatch(["ode", "--config", str(tmp_path / "none.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert parse_and_dispatch(["ode", "--config", str(bad)]) == 1
    assert "config" in capsys.readouterr().err


def test_io_failure_exit_code(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert parse_and_dispatch(["ode", "--output", str(blocker / "x")]) == 2
    assert "I/O error" in capsys.readouterr().err


def test_config_roundtrip(tmp_path):
    cfg = tmp_path / "plan.json"
    cfg.write_text(json.dumps({"N": [64, 256], "T": 2.0, "seed": 5, "output_dir": str(tmp_path / "o")}))
    dumped = tmp_path / "effective.json"
    argv = ["ode", "--config", str(cfg), "--seed", "9", "--ell", "0.5", "--dump-config", str(dumped)]
    assert parse_and_dispatch(argv) == 0
    plan = ExperimentPlan.from_json(dumped.read_text())
    assert plan.seed == 9 and plan.ell == 0.5 and plan.N == [64, 256] and plan.T == 2.0
    # re-parsing the effective config reproduces it exactly
    again = tmp_path / "again.json"
    assert parse_and_dispatch(["ode", "--config", str(dumped), "--dump-config", str(again)]) == 0
    assert again.read_text() == dumped.read_text()


def test_sample_and_sde_outputs(out_env, capsys):
    assert parse_and_dispatch(["sample", "--N", "64", "--T", "1", "--seed", "3"]) == 0
    first = (out_env / "trajectory.csv").read_bytes()
    assert parse_and_dispatch(["sample", "--N", "64", "--T", "1", "--seed", "3"]) == 0
    assert (out_env / "trajectory.csv").read_bytes() == first
    assert len(first.decode().splitlines()) == 1 + 9
    assert parse_and_dispatch(["sde", "--N", "16", "--T", "0.5"]) == 0
    assert (out_env / "sde.csv").read_text().startswith("t,S_ode,S,norm_s\n")


def test_study_commands(out_env, capsys):
    argv = ["acceptance", "--N", "16", "64", "--replicas", "4", "--seed", "1"]
    assert parse_and_dispatch(argv) == 0
    first = (out_env / "acceptance.csv").read_bytes()
    assert parse_and_dispatch(argv) == 0
    assert (out_env / "acceptance.csv").read_bytes() == first
    assert json.loads((out_env / "summary.json").read_text())["plan"]["seed"] == 1
    assert parse_and_dispatch(["report", "--N", "16", "--replicas", "2", "--T", "0.5", "--n-noise", "100"]) == 0
    for name in ("convergence", "acceptance", "drift", "paths"):
        assert (out_env / f"{name}.csv").exists()


def test_verify_clean_build(capsys):
    assert parse_and_dispatch(["verify"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "checks passed" in out


def test_help_documents_parameters():
    text = build_parser()._subparsers._group_actions[0].choices["sample"].format_help()
    for flag in ("--ell", "--zeta", "--kappa", "--s", "--N", "--T", "--S0", "--seed", "--config", "--threads"):
        assert flag in text
    assert "ell / N^zeta" in text


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "malalimit", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("sample", "ode", "sde", "verify", "acceptance", "convergence", "compare", "report"):
        assert cmd in res.stdout
