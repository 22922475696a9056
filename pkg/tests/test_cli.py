import json
import subprocess
import sys

import pytest

from soliton_forge.cli import main
from soliton_forge.core import InvalidParameterError
from soliton_forge.pipeline import SEED_EPS_ENV, RunConfig


def test_solve_reference(tmp_path, capsys):
    out, rep = tmp_path / "p.csv", tmp_path / "r.json"
    assert main(["solve", "--d", "2", "--q", "-1", "--Lambda", "40", "--out", str(out), "--report", str(rep)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["verdict"] == "ProvenComplete"
    entries = {e["name"]: e for e in json.loads(rep.read_text())}
    assert entries["completeness"]["measured"]["verdict"] == "ProvenComplete"
    assert out.exists()


def test_solve_is_deterministic(tmp_path):
    for i in (1, 2):
        assert main(["solve", "--Lambda", "31", "--out", str(tmp_path / f"p{i}.csv"),
                     "--report", str(tmp_path / f"r{i}.json")]) == 0
    assert (tmp_path / "p1.csv").read_bytes() == (tmp_path / "p2.csv").read_bytes()
    assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()


@pytest.mark.parametrize("argv", [
    ["solve", "--q", "0", "--Lambda", "40"],
    ["solve", "--d", "3", "--Lambda", "40"],
    ["solve"],
    ["solve", "--Lambda", "-1"],
    ["kahler", "--q", "-2", "--Lambda", "40"],
    ["kahler"],
    ["sweep", "--Lambdas"],
    ["compare", "only_one.json"],
])
def test_invalid_input_exits_3(argv, capsys):
    assert main(argv) == 3


def test_nonconvergence_exits_2_and_writes_report(tmp_path):
    rep = tmp_path / "r.json"
    assert main(["solve", "--q", "-2", "--Lambda", "5", "--report", str(rep)]) == 2
    entries = {e["name"]: e for e in json.loads(rep.read_text())}
    assert entries["reached_origin"]["status"] == "fail"


def test_kahler_reference(tmp_path):
    assert main(["kahler", "--Lambda", "40", "--report", str(tmp_path / "k.json")]) == 0


def test_compare_paths(tmp_path, capsys):
    a, b, c = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "c.json"
    a.write_text(json.dumps({"d": 2, "q": -1, "Lambda": 40}))
    b.write_text(json.dumps({"d": 2, "q": -2, "Lambda": 40}))
    c.write_text(json.dumps({"d": 2, "q": -1, "Lambda": 41, "pipeline": "kahler"}))
    assert main(["compare", str(a), str(a)]) == 0
    assert json.loads(capsys.readouterr().out)["max"] == 0.0
    assert main(["compare", str(a), str(b)]) == 3
    assert main(["compare", "--pipelines", str(a)]) == 0
    assert json.loads(capsys.readouterr().out)["max"] < 1e-5
    assert main(["compare", str(a), str(c)]) == 2


def test_sweep_sorted_rows(capsys):
    assert main(["sweep", "--Lambdas", "80", "31", "40", "--workers", "2"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    rows = [ln.split("\t") for ln in lines[1:]]
    assert [float(r[0]) for r in rows] == [31, 40, 80]
    assert all(r[2] == "ProvenComplete" for r in rows)


def test_check_roundtrip(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["solve", "--Lambda", "40", "--out", str(out)]) == 0
    assert main(["check", str(out), "--report", str(tmp_path / "c.json")]) == 0
    assert main(["check", str(tmp_path / "missing.csv")]) == 3


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"d": 2, "q": -1, "Lambda": 1e9}))
    assert main(["solve", "--config", str(cfg), "--Lambda", "40"]) == 0
    cfg.write_text(json.dumps({"d": 2, "bogus": 1}))
    assert main(["solve", "--config", str(cfg), "--Lambda", "40"]) == 3


def test_seed_eps_env_override(monkeypatch):
    cfg = RunConfig(Lambda=40.0)
    monkeypatch.setenv(SEED_EPS_ENV, "5e-4")
    assert cfg.effective_seed_eps() == 5e-4
    monkeypatch.setenv(SEED_EPS_ENV, "abc")
    with pytest.raises(InvalidParameterError):
        cfg.effective_seed_eps()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "soliton_forge", "solve", "--q", "0", "--Lambda", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 3 and "out of scope" in proc.stderr
