import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from mamax.cli import main
from mamax.scene import load_polyhedron, load_scene

SCENES = Path(__file__).resolve().parent.parent / "scenes"
FAST = ["--samples", "100000", "--oracle-points", "100000", "--grid", "400"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_pair_halfplane(capsys, tmp_path):
    code, out, _ = run(capsys, "pair", "--scene", SCENES / "halfplane.json", "--n", 1, "--phi", "const",
                       "--expect", 2.0, "--out", tmp_path / "hp", *FAST)
    rep = json.loads(out)
    assert code == 0 and rep["verdict"] == "pass" and rep["schema"] == 1 and rep["seed"] == 0
    assert abs(rep["value"] - 2.0) <= max(0.02, 3 * rep["stderr"])
    assert {g["name"] for g in rep["gates"]} == {"stratified-vs-expected", "stratified-vs-sweep"}
    assert "skipped" in rep["oracle_bt"]
    rows = list(csv.DictReader(open(tmp_path / "hp.csv")))
    assert [r["J"] for r in rows] == ["0", "1", "0-1"]
    assert json.loads((tmp_path / "hp.json").read_text()) == rep


def test_pair_single_smooth_matches_direct(capsys):
    code, out, _ = run(capsys, "pair", "--scene", SCENES / "single-smooth.json", "--n", 1, *FAST)
    rep = json.loads(out)
    assert code == 0, rep["gates"]
    assert "stratified-vs-sweep" in [g["name"] for g in rep["gates"]]


def test_pair_with_compact_phi_runs_all_oracles(capsys):
    code, out, _ = run(capsys, "pair", "--scene", SCENES / "halfplane.json", "--n", 1,
                       "--phi", "box:-0.5,0.5,0.4", "--delta-sweep", *FAST)
    rep = json.loads(out)
    assert code == 0, rep["gates"]
    assert {"stratified-vs-bt", "sweep-vs-bt", "delta-sweep-consistent"} <= {g["name"] for g in rep["gates"]}


def test_pair_malformed_scene(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"dim": 1, "pieces": [{"kind": "nope"}], "domain": [[-1, 1], [-1, 1]]}))
    code, _, err = run(capsys, "pair", "--scene", bad, "--n", 1)
    assert code == 2 and "pieces[0].kind" in err
    bad.write_text('{"dim": 1,\n "pieces": [\n')
    code, _, err = run(capsys, "pair", "--scene", bad, "--n", 1)
    assert code == 2 and "line" in err
    code, _, err = run(capsys, "pair", "--scene", tmp_path / "missing.json", "--n", 1)
    assert code == 2


def test_pair_input_errors(capsys):
    code, _, err = run(capsys, "pair", "--scene", SCENES / "halfplane.json", "--n", 2)
    assert code == 2 and "--n" in err
    code, _, err = run(capsys, "pair", "--scene", SCENES / "halfplane.json", "--n", 1, "--phi", "q7")
    assert code == 2 and "phi" in err
    assert run(capsys, "pair", "--n", 1)[0] == 2


def test_pair_degenerate_refuses(capsys):
    code, out, _ = run(capsys, "pair", "--scene", SCENES / "tangential.json", "--n", 1, "--no-oracle",
                       "--samples", 20000)
    rep = json.loads(out)
    assert code == 1 and rep["value"] is None and rep["verdict"] == "degenerate"
    assert "offsets" in rep["error"]
    code, out, _ = run(capsys, "pair", "--scene", SCENES / "tangential.json", "--n", 1, "--no-oracle",
                       "--samples", 20000, "--allow-degenerate")
    assert code == 0 and json.loads(out)["value"] is not None


def test_pair_gate_failure_and_no_gate(capsys):
    args = ["pair", "--scene", SCENES / "halfplane.json", "--n", 1, "--no-oracle", "--expect", 3.0, *FAST]
    code, out, _ = run(capsys, *args)
    assert code == 1 and json.loads(out)["verdict"] == "fail"
    code, out, _ = run(capsys, *args, "--no-gate")
    assert code == 0 and json.loads(out)["verdict"] == "fail-ignored"


def test_equilibrium_refusal(capsys):
    code, out, err = run(capsys, "equilibrium", "--spec", SCENES / "violating_spec.json", "--samples", 10000)
    rep = json.loads(out)
    assert code == 1 and rep["verdict"] == "refused"
    assert "J=[1]" in rep["error"] and "sum N_j = 3" in rep["error"]
    assert "refused" in err


def test_equilibrium_polydisc(capsys):
    code, out, _ = run(capsys, "equilibrium", "--spec", SCENES / "polydisc_spec.json", "--expect", 1.0,
                       "--no-oracle", "--samples", 200000)
    rep = json.loads(out)
    assert code == 0, rep["gates"]
    assert rep["normalization"] == "(1/2pi)^dim"
    assert [g["name"] for g in rep["gates"]] == ["mass-outside-K", "equilibrium-vs-expected"]


def test_verify_suites(capsys):
    code, out, err = run(capsys, "verify", "lemma2", "--count", 200)
    rep = json.loads(out)
    assert code == 0 and rep["passed"] and "PASS" in err
    assert all(c["value"] < 1e-10 for c in rep["checks"])
    code, out, _ = run(capsys, "verify", "positivity", "--count", 20)
    assert code == 0
    code, out, _ = run(capsys, "verify", "lemma4", "--scene", SCENES / "tripod.json", "--samples", 300000)
    rep = json.loads(out)
    assert code == 0 and any(c["name"] == "stokes-tripod-J0-1" for c in rep["checks"])
    assert run(capsys, "verify", "nope")[0] == 2
    assert run(capsys, "verify", "lemma2", "--scene", SCENES / "tripod.json")[0] == 2


def test_sweep_csv(capsys, tmp_path):
    code, out, _ = run(capsys, "sweep", "--scene", SCENES / "halfplane.json", "--n", 1, "--out", tmp_path / "sw")
    rep = json.loads(out)
    assert code == 0 and abs(rep["extrapolated"] - 2.0) < 1e-3
    rows = list(csv.DictReader(open(tmp_path / "sw.csv")))
    assert list(rows[0]) == ["epsilon", "value", "stderr", "extrapolated", "rate"]
    assert len(rows) == 4 and rows[-1]["extrapolated"] != ""
    assert run(capsys, "sweep", "--scene", SCENES / "halfplane.json", "--n", 1, "--eps", "0.1,0.2,0.05")[0] == 2


def test_deterministic_reports(tmp_path):
    args = [sys.executable, "-m", "mamax", "pair", "--scene", str(SCENES / "tripod.json"), "--n", "1",
            "--phi", "box:-0.5,0.5,0.3", "--seed", "11", *FAST]
    outs = []
    for k, threads in enumerate(("1", "2")):
        p = subprocess.run(args + ["--threads", threads, "--out", str(tmp_path / f"r{k}")], capture_output=True)
        assert p.returncode in (0, 1)
        outs.append(((tmp_path / f"r{k}.json").read_bytes(), (tmp_path / f"r{k}.csv").read_bytes()))
    assert outs[0] == outs[1]
    assert b'"seed": 11' in outs[0][0]


@pytest.mark.parametrize("name", sorted(p.name for p in SCENES.glob("*.json")))
def test_shipped_files_load(name):
    (load_polyhedron if "spec" in name else load_scene)(SCENES / name)
