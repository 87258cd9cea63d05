import json
import subprocess
import sys

import pytest

from conftest import four_user_scenario, users_from
from macoff.cli import main
from macoff.model import Scenario, SystemParams


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "sc.json"
    path.write_text(four_user_scenario(seed=3).to_json())
    return path


@pytest.fixture
def spec_file(tmp_path):
    doc = {"experiment": "cli", "schemes": ["fullma-greedy", "tdma-partial", "no-offloading"],
           "sweep": {"variable": "zeta", "values": [0.5, 1.0]}, "n_realizations": 3, "seed": 11,
           "n_users": 4, "cell": {"B": [2e6, 1e6, 3e6, 4e6], "L": [1.2, 1.5, 1.8, 2.5]}}
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(doc))
    return path


def test_solve_happy_path(scenario_file, tmp_path, capsys):
    out = tmp_path / "out.json"
    assert main(["solve", "--scenario", str(scenario_file), "--scheme", "fullma-binary-greedy",
                 "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["status"] == "ok" and doc["scheme"] == "fullma-greedy"
    assert "offload_set" in doc and doc["energy"]["total"] > 0
    assert len(doc["config_digest"]) == 64
    line = capsys.readouterr().out.strip()
    assert line.count("\n") == 0 and "energy_total" in line


def test_solve_partial_infeasible(tmp_path):
    p = SystemParams()
    sc = Scenario(p, users_from(p, B=[1e6, 2e6], L=[0.2, 0.15], alpha=[1e8, 1e8]), seed=0)
    path = tmp_path / "bad.json"
    path.write_text(sc.to_json())
    out = tmp_path / "err.json"
    assert main(["solve", "--scenario", str(path), "--scheme", "fullma-partial", "--out", str(out), "-q"]) == 3
    rec = json.loads(out.read_text())
    assert rec["status"] == "error" and rec["exit_code"] == 3 and rec["error"] == "InfeasibleUser"


def test_solve_malformed(tmp_path, capsys):
    path = tmp_path / "m.json"
    path.write_text("{not json")
    assert main(["solve", "--scenario", str(path)]) == 2
    rec = json.loads(capsys.readouterr().err.strip())
    assert rec["exit_code"] == 2
    assert main(["solve", "--scenario", str(tmp_path / "missing.json")]) == 2
    assert main(["solve", "--scenario", str(path), "--seed", str(2 ** 64)]) == 2
    assert main(["solve", "--scenario", ""]) == 2


def test_sweep_outputs(spec_file, tmp_path, capsys):
    out = tmp_path / "rows.csv"
    assert main(["sweep", "--spec", str(spec_file), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("experiment,scheme,sweep,realization,energy_total,energy_tx,energy_local,wall_ms,iters")
    assert len(lines) == 1 + 3 * 2 * 3
    summary = (tmp_path / "rows.summary.csv").read_text().splitlines()
    assert len(summary) == 1 + 3 * 2
    meta = json.loads((tmp_path / "rows.csv.meta.json").read_text())
    assert meta["seed"] == 11 and len(meta["config_digest"]) == 64
    stdout = capsys.readouterr().out
    assert stdout.count("\n") == 1 and "18 rows, 0 failed" in stdout


def test_sweep_seed_override_changes_digest(spec_file, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["sweep", "--spec", str(spec_file), "--out", str(a), "-q"])
    main(["sweep", "--spec", str(spec_file), "--out", str(b), "--seed", "12", "-q"])
    ma = json.loads((tmp_path / "a.csv.meta.json").read_text())
    mb = json.loads((tmp_path / "b.csv.meta.json").read_text())
    assert mb["seed"] == 12 and ma["config_digest"] != mb["config_digest"]
    assert a.read_text() != b.read_text()


def test_sweep_bad_spec(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"experiment": "x", "schemes": ["fullma-greedy"],
                                "sweep": {"variable": "zeta", "values": [2.0, 1.0]}}))
    assert main(["sweep", "--spec", str(path), "--out", str(tmp_path / "o.csv")]) == 2


def test_sweep_partial_failures_exit_zero(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"experiment": "x", "schemes": ["fullma-complete", "no-offloading"],
                                "sweep": {"variable": "K", "values": [2]}, "n_realizations": 2,
                                "cell": {"L": [1.2, 0.1]}}))
    out = tmp_path / "o.csv"
    assert main(["sweep", "--spec", str(path), "--out", str(out), "-q"]) == 0
    assert "failed:InfeasibleUser" in out.read_text()


def test_audit_contract(capsys):
    assert main(["audit", "--instances", "0"]) == 0
    assert main(["audit", "--instances", "3", "--suites", "lp,class,psd,quasi"]) == 0
    assert main(["audit", "--instances", "3", "--suites", "lp,class", "--inject-fault"]) == 1
    out = capsys.readouterr().out
    assert "FAIL" in out and "PASS" in out
    assert main(["audit", "--suites", "nope"]) == 2


def test_console_entry_point(scenario_file):
    proc = subprocess.run([sys.executable, "-m", "macoff.cli", "solve", "--scenario", str(scenario_file),
                           "--scheme", "tdma-partial", "--quiet"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout == ""
