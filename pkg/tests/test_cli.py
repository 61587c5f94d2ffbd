import json
import subprocess
import sys

import pytest

from teamlearn.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def fig3_file(tmp_path, capsys):
    path = tmp_path / "fig3.json"
    assert run(capsys, "example", "--which", "fig3", "--beta", "0.8", "--out", str(path))[0] == 0
    return str(path)


def test_validate(capsys, fig3_file):
    code, out, _ = run(capsys, "validate", fig3_file)
    doc = json.loads(out)
    assert code == 0 and doc["valid"] and doc["joint_policies"] == 16 and doc["team"]


def test_validate_bad_file(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    code, _, err = run(capsys, "validate", str(bad))
    assert code == 2 and err.startswith("error:")


def test_oracle_constants_and_br(capsys, fig3_file):
    doc = json.loads(run(capsys, "oracle", fig3_file, "--what", "constants")[1])
    assert doc["delta_bar"] == pytest.approx(2.0)
    doc = json.loads(run(capsys, "oracle", fig3_file, "--what", "br", "--player", "1",
                         "--opponents", "1,2")[1])
    assert doc["best_replies"] == ["1,2"]
    doc = json.loads(run(capsys, "oracle", fig3_file, "--what", "qstar", "--opponents", "1,2")[1])
    assert len(doc["qstar"]) == 2


def test_oracle_needs_opponents(capsys, fig3_file):
    assert run(capsys, "oracle", fig3_file, "--what", "br")[0] == 2


def test_analyze(capsys, fig3_file):
    doc = json.loads(run(capsys, "analyze", fig3_file, "--lambda", "300")[1])
    assert doc["team_optimal"] == ["(1,2;1,2)"]
    assert doc["weakly_acyclic"] and doc["common_interest"]
    assert "minimal_lambda_cumber_sets" in doc


def test_chain(capsys, fig3_file):
    doc = json.loads(run(capsys, "chain", fig3_file, "--gamma", "0.01", "--kappa", "0.1",
                         "--stationary", "--dobrushin", "--power", "5")[1])
    assert doc["n"] == 16
    assert doc["mass_satisfied"] >= doc["lower_bound"]
    assert 0 < doc["dobrushin"] <= 1
    assert sum(doc["stationary"].values()) == pytest.approx(1.0)


def test_run_and_export(capsys, tmp_path, fig3_file):
    exp = tmp_path / "exp.json"
    exp.write_text(json.dumps({"game": fig3_file, "algorithm": "alg3", "phases": 4,
                               "phase_length": 100, "seeds": [0, 1],
                               "players": [{"aspiration": 30.0}]}))
    out_csv = tmp_path / "m.csv"
    code, out, _ = run(capsys, "run", str(exp), "--out", str(out_csv), "--threads", "1")
    assert code == 0 and json.loads(out)["seeds"] == [0, 1]
    assert len(out_csv.read_text().splitlines()) == 9 and out_csv.with_suffix(".json").exists()


def test_repro_small(capsys, tmp_path):
    out = tmp_path / "t.csv"
    code, text, _ = run(capsys, "repro", "--case", "a,d", "--gammas", "0.05", "--seeds", "2",
                        "--phases", "3", "--out", str(out))
    rows = json.loads(text)
    assert code == 0 and [r["case"] for r in rows] == ["A", "D"]
    assert rows[0]["reference"] == pytest.approx(0.638)
    assert len(out.read_text().splitlines()) == 3


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "teamlearn", "example", "--which", "fig2"],
                         capture_output=True, text=True, check=True)
    assert json.loads(res.stdout)["actions"] == [3, 3]
