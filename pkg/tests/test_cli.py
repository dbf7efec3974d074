"""Command line front end: exit codes, artifacts, schema and determinism."""
from __future__ import annotations

import csv
import json

import jsonschema
import pytest
from conftest import CONFIGS, run_cli

from bbscert.pipeline import ADVISORY_STAGES, CERTIFIED, certificate, load_schema, without_timing

VDP = CONFIGS / "vanderpol.toml"


def test_certify_vanderpol(certify_run):
    assert certify_run["code"] == 0, certify_run["stderr"]
    v = certify_run["verdict"]
    assert v["certified"] and v["certificate"] == CERTIFIED
    st = v["stages"]
    assert abs(st["shooting"]["tau1"] - 1.3667) <= 5e-3
    assert abs(st["shooting"]["tau2"] - 2.4601) <= 5e-3
    for name in ("shooting", "conditions", "coercivity", "probe", "perturbation"):
        assert st[name]["verdict"] == "pass", name
    assert v["advisory_stages"] == list(ADVISORY_STAGES)
    jsonschema.validate(v, load_schema())


def test_certify_artifacts(certify_run):
    out = certify_run["out"]
    for name in ("verdict.json", "extremal.csv", "lq.csv", "probe.csv", "perturb.csv"):
        assert (out / name).is_file(), name
    assert json.loads((out / "verdict.json").read_text()) == certify_run["verdict"]
    with open(out / "perturb.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 100
    assert set(rows[0]) == {"trial", "perturbation", "cost_gap", "in_tube", "deviation"}
    with open(out / "probe.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert header[:3] == ["t", "branch", "sigma_min"]


@pytest.mark.slow
def test_certify_is_deterministic(certify_run, tmp_path):
    code, stdout, _ = run_cli("certify", VDP, "--json", "--out", tmp_path)
    assert code == 0
    first = json.dumps(without_timing(certify_run["verdict"]), sort_keys=True)
    second = json.dumps(without_timing(json.loads(stdout)), sort_keys=True)
    assert first == second
    a = (certify_run["out"] / "perturb.csv").read_bytes()
    assert a == (tmp_path / "perturb.csv").read_bytes()


def test_advisory_stages_cannot_fail_certificate():
    stages = {"shooting": {"verdict": "pass"}, "conditions": {"verdict": "pass"},
              "coercivity": {"verdict": "pass"}, "probe": {"verdict": "fail"}, "perturbation": {"verdict": "fail"}}
    assert certificate(stages) == (True, CERTIFIED)
    stages["conditions"]["verdict"] = "fail"
    assert certificate(stages) == (False, "not certified: conditions")


def test_shoot_without_guess(tmp_path):
    text = "\n".join(line for line in VDP.read_text().splitlines() if not line.startswith("guess"))
    cfg = tmp_path / "noguess.toml"
    cfg.write_text(text)
    code, stdout, stderr = run_cli("shoot", cfg, "--json")
    assert code == 2
    assert "guess" in stderr
    err = json.loads(stdout)
    assert err["exit_code"] == 2 and err["error"]["kind"] == "config"


def test_shoot_writes_extremal(tmp_path):
    code, stdout, _ = run_cli("shoot", VDP, "--out", tmp_path)
    assert code == 0
    assert "tau1 = 1.366" in stdout
    with open(tmp_path / "extremal.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "t" and len(rows) > 100


def test_usage_errors(tmp_path):
    assert run_cli("frobnicate", VDP)[0] == 2
    assert run_cli("shoot")[0] == 2
    assert run_cli("shoot", tmp_path / "missing.toml")[0] == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("[problem\n")
    code, stdout, stderr = run_cli("check", bad, "--json")
    assert code == 2 and json.loads(stdout)["error"]["line"] == 1


def test_numerical_failure_exit_code(tmp_path):
    # a guess the Newton iteration cannot repair within one step
    text = VDP.read_text().replace("tau1 = 1.37, tau2 = 2.46", "tau1 = 0.2, tau2 = 0.3") + "\n[solver]\nmax_iter = 1\n"
    cfg = tmp_path / "far.toml"
    cfg.write_text(text)
    code, stdout, _ = run_cli("shoot", cfg, "--json")
    assert code == 3
    assert json.loads(stdout)["error"]["kind"] == "numerical"


def test_check_and_lq_oracle_agree_with_certify(certify_run):
    code, stdout, _ = run_cli("check", VDP, "--json")
    assert code == 0
    assert json.loads(stdout)["conditions"]["verdict"] == "pass"
    code, stdout, _ = run_cli("lq-oracle", VDP, "--n", 128, "--json")
    assert code == 0
    res = json.loads(stdout)["coercivity"]
    assert res["oracle"]["N"] == 128
    assert res["oracle"]["verdict"] == certify_run["verdict"]["stages"]["coercivity"]["verdict"]
    assert res["oracle"]["agrees"]


def test_perturb_trials_flag(tmp_path):
    code, stdout, _ = run_cli("perturb", VDP, "--trials", 5, "--seed", 3, "--out", tmp_path)
    assert code == 0
    with open(tmp_path / "perturb.csv", newline="") as fh:
        assert len(list(csv.DictReader(fh))) == 5
    assert json.loads((tmp_path / "perturb.json").read_text())["perturbation"]["verdict"] == "pass"
