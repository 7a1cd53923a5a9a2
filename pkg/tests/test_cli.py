"""Command-line front end: reports, exit codes and determinism."""

from __future__ import annotations

import csv
import io
import json
import subprocess
import sys

import pytest

from fermode import cli
from fermode.fock import load_state
from fermode.locc import load_script


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def report(argv, capsys):
    code, out, _ = run(argv, capsys)
    return code, json.loads(out)


def test_teleport_report(capsys):
    code, doc = report(["teleport", "--alpha2", "0.8", "--trials", "20", "--seed", "7"], capsys)
    assert code == 0
    assert doc["schema_version"] == cli.SCHEMA_VERSION
    assert doc["config"]["alpha2"] == 0.8 and doc["config"]["seed"] == 7
    branches = [r for r in doc["results"] if r["kind"] == "branch"]
    trials = [r for r in doc["results"] if r["kind"] == "trial"]
    assert len(branches) == 4 and len(trials) == 20
    assert min(r["fidelity"] for r in branches) >= 1 - 1e-9
    assert [t["seed"] for t in trials] == [7 ^ i for i in range(20)]
    assert all(t["monotone_trace"] for t in trials)
    assert doc["verdict"]["passed"] is True


@pytest.mark.parametrize(
    "argv",
    [
        ["teleport", "--alpha2", "1.5"],
        ["teleport", "--alpha2", "-0.1"],
        ["teleport", "--trials", "0"],
        ["teleport", "--seed", str(2**64)],
        ["teleport", "--no-such-flag"],
        ["frobnicate"],
        ["dense-code", "--bits", "2"],
        ["concentrate", "--N", "13"],
        ["bootstrap", "--pairs", "1"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(argv)
    assert exc.value.code == 2
    capsys.readouterr()


def test_dense_code_all_messages(capsys):
    code, doc = report(["dense-code", "--trials", "8"], capsys)
    assert code == 0
    messages = [r for r in doc["results"] if r["kind"] == "message"]
    assert [m["bits"] for m in messages] == ["00", "01", "10", "11"]
    assert all(m["decoded"] == [m["bits"]] and m["probability"] == pytest.approx(1.0) for m in messages)


def test_convert(capsys):
    code, doc = report(["convert", "--rounds", "2"], capsys)
    assert code == 0
    rounds = [r for r in doc["results"] if r["kind"] == "round"]
    assert len(rounds) == 6 and all(r["passed"] for r in rounds)


def test_concentrate(capsys):
    code, doc = report(["concentrate", "--N", "4", "--alpha2", "0.7", "--trials", "3"], capsys)
    assert code == 0
    checks = doc["verdict"]["checks"]
    assert checks["binomial_law"]["value"] <= 1e-12


def test_bootstrap(capsys):
    code, doc = report(["bootstrap", "--alpha2", "0.7", "--pairs", "4", "--trials", "5"], capsys)
    assert code == 0
    exact = doc["results"][0]
    assert exact["success_probability"] == pytest.approx(0.42)


def test_verify_monotone(capsys):
    code, doc = report(["verify-monotone", "--trials", "3", "--povms", "10"], capsys)
    assert code == 0
    assert doc["results"][0]["checks"] == 30


@pytest.mark.parametrize("start", ["boson", "fermion"])
def test_verify_no_conversion(start, capsys):
    code, doc = report(["verify-no-conversion", "--start", start, "--trials", "3"], capsys)
    assert code == 0
    assert doc["results"][0]["max_extraction_probability"] == 0.0


def test_show_state_round_trip(tmp_path, capsys):
    saved = tmp_path / "pair.json"
    code, doc = report(["show-state", "--alpha2", "0.3", "--phase", "0.5", "--save-state", str(saved)], capsys)
    assert code == 0
    state = load_state(saved.read_text())
    code, again = report(["show-state", "--input", str(saved)], capsys)
    assert code == 0
    parties = [r for r in again["results"] if r["kind"] == "party"]
    assert parties[0]["monotone_A"] == pytest.approx(0.16)
    assert state.layout.parties == ("A", "B")


def test_indefinite_state_fails_with_transcript(tmp_path, capsys):
    doc = {
        "format": "fermode-state",
        "version": 1,
        "layout": [{"label": "a", "statistics": "fermion", "party": "A"}],
        "kind": "pure",
        "amplitudes": [["0", 0.6, 0.0], ["1", 0.8, 0.0]],
    }
    path = tmp_path / "cat.json"
    path.write_text(json.dumps(doc))
    code, out, err = run(["show-state", "--input", str(path)], capsys)
    assert code == 1
    assert "FAILED" in err and "definite_parity" in err
    assert json.loads(out)["verdict"]["passed"] is False


def test_export_script(tmp_path, capsys):
    path = tmp_path / "teleport.json"
    code, _, _ = run(["teleport", "--export-script", str(path)], capsys)
    assert code == 0
    assert len(load_script(path.read_text()).steps) >= 2


def test_csv_output(tmp_path, capsys):
    path = tmp_path / "out.csv"
    code, _, _ = run(["teleport", "--trials", "3", "--format", "csv", "--output", str(path)], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(path.read_text())))
    assert {r["record"] for r in rows} == {"result", "check", "verdict"}
    assert rows[-1]["passed"] == "True"


@pytest.mark.parametrize(
    "argv",
    [
        ["teleport", "--alpha2", "0.3", "--phase", "1.2", "--trials", "12", "--seed", "42"],
        ["concentrate", "--N", "5", "--trials", "6", "--seed", "42"],
        ["verify-no-conversion", "--trials", "4", "--seed", "42"],
    ],
)
def test_reports_are_byte_identical(argv, tmp_path, monkeypatch):
    outputs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("FERMODE_THREADS", threads)
        path = tmp_path / f"r{threads}.json"
        assert cli.main([*argv, "--output", str(path)]) == 0
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1]


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "fermode.cli", "dense-code", "--bits", "10"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["verdict"]["passed"]
