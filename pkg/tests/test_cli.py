import json

import pytest

from banditlp.cli import main
from banditlp.bench import gen_integrality_gap, as_lagrangean
from banditlp.statespace import save_instance


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def test_gen_validate_solve_plan_run_oracle(tmp_path, capsys):
    path = str(tmp_path / "gap4.json")
    code, out = run_cli(capsys, "gen", "--family", "integrality-gap", "--n", "4", "--seed", "0", "-o", path)
    assert code == 0
    assert json.loads(out)["arms"] == 4

    code, out = run_cli(capsys, "validate", path)
    assert code == 0
    assert json.loads(out)["valid"] is True

    dump = str(tmp_path / "gap4.lp")
    code, out = run_cli(capsys, "solve", path, "--dump-lp", dump)
    assert code == 0
    doc = json.loads(out)
    assert doc["status"] == "optimal"
    assert abs(doc["gamma_star"] - 1.0) < 1e-6
    text = open(dump).read()
    assert text.startswith("Maximize") and "Subject To" in text

    code, out = run_cli(capsys, "plan", path)
    assert code == 0
    doc = json.loads(out)
    assert [row["arm"] for row in doc["order"]] == ["a0", "a1", "a2", "a3"]
    assert doc["stats"][0]["P"] == pytest.approx(0.25, abs=1e-6)

    code, out = run_cli(capsys, "run", path, "--seed", "3")
    assert code == 0
    lines = [json.loads(l) for l in out.strip().splitlines()]
    assert lines[-1]["summary"] is True
    assert lines[-1]["cost"] <= 4

    code, out = run_cli(capsys, "run", path, "--seed", "3", "--reps", "200")
    assert code == 0
    doc = json.loads(out)
    assert doc["reps"] == 200 and doc["violations"] == []

    code, out = run_cli(capsys, "oracle", path)
    assert code == 0
    doc = json.loads(out)
    assert abs(doc["opt"] - 175 / 256) < 1e-9
    assert abs(doc["ratio"] - 256 / 175) < 1e-6


def test_validate_flags_corruption(tmp_path, capsys):
    from banditlp.bench import corrupt_instance

    inst = corrupt_instance(gen_integrality_gap(2), seed=1)
    path = str(tmp_path / "bad.json")
    save_instance(inst, path)
    code, out = run_cli(capsys, "validate", path)
    assert code == 1
    doc = json.loads(out)
    assert doc["valid"] is False and doc["diagnostics"]


def test_lagrangean_variant_run(tmp_path, capsys):
    inst = as_lagrangean(gen_integrality_gap(2))
    path = str(tmp_path / "lag.json")
    save_instance(inst, path)
    code, out = run_cli(capsys, "run", path, "--seed", "1")
    assert code == 0
    summary = json.loads(out.strip().splitlines()[-1])
    assert summary["variant"] == "lagrangean"


def test_suite_and_report_round_trip(tmp_path, capsys):
    spec = {
        "family": "random-two-level",
        "count": 3,
        "seed": 5,
        "budget_cap": 5,
        "variant": "budgeted",
        "options": {"reps": 500},
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    out_path = tmp_path / "report.json"
    code, out = run_cli(capsys, "suite", "--spec", str(spec_path), "-o", str(out_path))
    assert code == 0
    doc = json.loads(out)
    assert doc["summary"]["all_ok"] is True
    assert len(doc["rows"]) == 3

    code, out = run_cli(capsys, "report", str(out_path), "--format", "csv")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].startswith("instance")
    assert len(lines) == 4


def test_tolerance_env_override(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("BANDITLP_TOL", "1e-6")
    from banditlp.lp import default_tolerance

    assert default_tolerance() == 1e-6
    monkeypatch.delenv("BANDITLP_TOL")
    assert default_tolerance() == 1e-7
