"""Command-line interface: output records, exit codes and configuration."""

import json
import shutil
import subprocess

import pytest

from slmfg.cli import main
from slmfg.corpus import corpus_path
from slmfg.model import load_problem
from slmfg.mpcc import load_mpcc


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def records(text):
    out = []
    for line in text.splitlines():
        kv = dict(t.split("=", 1) for t in line.split(" ") if "=" in t)
        out.append(kv)
    return out


class TestSolveNep:
    def test_records(self, capsys):
        code, out, _ = run(capsys, "solve-nep", "--problem", "corpus/ex3", "--x", "0", "--format", "records")
        assert code == 0
        recs = records(out)
        assert recs[0]["record"] == "config" and recs[0]["command"] == "solve-nep"
        assert recs[1]["status"] == "found" and recs[2]["y"] == "(1,1)"

    def test_path_forms(self, capsys):
        a = run(capsys, "solve-nep", "--problem", str(corpus_path("ex3")), "--x", "0.5", "--format", "records")
        b = run(capsys, "solve-nep", "--problem", "corpus/ex3", "--x", "0.5", "--format", "records")
        assert a == b

    def test_unbounded_exit_one(self, capsys):
        code, out, _ = run(capsys, "solve-nep", "--problem", "corpus/ex2", "--x", "-1", "--format", "records")
        assert code == 1

    def test_human(self, capsys):
        code, out, _ = run(capsys, "solve-nep", "--problem", "corpus/ex1", "--x", "2")
        assert code == 0 and "equilibrium:" in out

    def test_missing_file(self, capsys):
        code, _, err = run(capsys, "solve-nep", "--problem", "nowhere.slmfg", "--x", "0")
        assert code == 2 and "error" in err

    def test_bad_vector(self, capsys):
        code, _, err = run(capsys, "solve-nep", "--problem", "corpus/ex3", "--x", "a,b")
        assert code == 2

    def test_unknown_subcommand(self, capsys):
        code, _, _ = run(capsys, "frobnicate")
        assert code == 2


class TestConfig:
    def test_negative_box(self, capsys):
        code, out, _ = run(capsys, "solve-nep", "--problem", "corpus/ex3", "--x", "0", "--box", "-1,1", "--format", "records")
        assert code == 0 and records(out)[0]["box"] == "(-1,1)"

    def test_file_then_flags(self, capsys, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"seed": 7, "grid-step": 0.1, "format": "records"}))
        code, out, _ = run(capsys, "solve-nep", "--problem", "corpus/ex3", "--x", "0", "--config", str(cfg), "--seed", "9")
        c = records(out)[0]
        assert code == 0 and c["seed"] == "9" and c["grid_step"] == "0.1"

    def test_unknown_key(self, capsys, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"sed": 7}))
        code, _, err = run(capsys, "solve-nep", "--problem", "corpus/ex3", "--x", "0", "--config", str(cfg))
        assert code == 2 and "sed" in err


class TestReformulate:
    def test_round_trip_through_file(self, capsys, tmp_path):
        out = tmp_path / "ex3.mpcc"
        code, _, _ = run(capsys, "reformulate", "--problem", "corpus/ex3", "--out", str(out))
        assert code == 0
        assert load_mpcc(out).dim == 7

    def test_check_point(self, capsys, tmp_path):
        out = tmp_path / "ex3.mpcc"
        run(capsys, "reformulate", "--problem", "corpus/ex3", "--out", str(out))
        code, text, _ = run(capsys, "check-point", "--mpcc", str(out), "--point", "0,1,1,0,1,0,1", "--format", "records")
        assert code == 0 and "feasible=true" in text
        code, _, _ = run(capsys, "check-point", "--mpcc", str(out), "--point", "0,2,1,0,1,0,1")
        assert code == 1


class TestAnalysis:
    def test_vertices(self, capsys):
        code, out, _ = run(capsys, "vertices", "--problem", "corpus/ex4", "--follower", "f1",
                           "--x", "0", "--y", "0,0,0,0", "--format", "records")
        assert code == 0
        verts = [r["lam"] for r in records(out) if r.get("record") == "vertex"]
        assert sorted(verts) == ["(0,1)", "(1,0)"]

    def test_check_cq_crcq(self, capsys):
        code, out, _ = run(capsys, "check-cq", "--problem", "corpus/ex4", "--which", "crcq", "--follower", "f1",
                           "--x", "0", "--y", "0,0", "--format", "records")
        assert code == 0 and "ViolationWitness" in out

    def test_verify_local(self, capsys):
        code, out, _ = run(capsys, "verify-local", "--problem", "corpus/ex3", "--point", "0,1,1", "--format", "records")
        assert code == 0 and "BetterNeighbor" in out

    def test_gate_checklist(self, capsys):
        code, out, _ = run(capsys, "gate", "--problem", "corpus/ex4", "--theorem", "t2.4", "--point", "0,0,0,0,0",
                           "--radius", "0.1", "--step", "0.01")
        assert code == 0
        assert "[ ] CRCQ" in out and "HypothesisFailed(CRCQ)" in out

    def test_gate_empty_polytope(self, capsys):
        code, out, _ = run(capsys, "gate", "--problem", "corpus/ex1", "--theorem", "t2.3", "--point", "0,0,0,0,0",
                           "--format", "records")
        assert code == 0 and "NotApplicable" in out


class TestGnep:
    def test_reduce(self, capsys, tmp_path):
        out = tmp_path / "reduced.slmfg"
        code, _, _ = run(capsys, "reduce-gnep", "--problem", "corpus/gnep1", "--out", str(out))
        assert code == 0
        assert load_problem(out).follower_ids == ("g1", "g2")

    def test_refused(self, capsys, tmp_path):
        src = tmp_path / "bad.slmfg"
        src.write_text(
            'leader { dim 1; objective "x.0"; box -1 1; }\n'
            'follower a { dim 1; objective "(^ y.a.0 2)"; }\n'
            'follower b { dim 1; objective "(^ y.b.0 2)"; }\n'
            'group g { members a b; shared_constraint "(+ (* x.0 (^ (+ y.a.0 y.b.0) 2)) -1)"; }\n'
        )
        code, _, err = run(capsys, "reduce-gnep", "--problem", str(src))
        assert code == 1

    def test_equivalence_exit_codes(self, capsys):
        ok = run(capsys, "check-gnep-equiv", "--problem", "corpus/gnep1", "--x", "0", "--box", "-1,1", "--grid-step", "0.1")
        bad = run(capsys, "check-gnep-equiv", "--problem", "corpus/gnep1", "--x", "1", "--box", "-1,1", "--grid-step", "0.1")
        assert (ok[0], bad[0]) == (0, 1)


class TestCorpus:
    def test_list(self, capsys):
        code, out, _ = run(capsys, "corpus", "list", "--format", "records")
        assert code == 0
        assert [r["id"] for r in records(out) if r.get("record") == "entry"] == ["ex1", "ex2", "ex3", "ex4", "gnep1"]

    def test_show(self, capsys):
        code, out, _ = run(capsys, "corpus", "show", "ex4", "--format", "records")
        assert code == 0 and out.count("record=fact") == 6

    def test_unknown(self, capsys):
        code, _, _ = run(capsys, "corpus", "show", "ex9")
        assert code == 2

    def test_run_entry(self, capsys):
        code, out, _ = run(capsys, "corpus", "run", "gnep1", "--format", "records")
        assert code == 0 and "passed=3" in out


@pytest.mark.skipif(shutil.which("slmfg") is None, reason="console script not installed")
class TestEntryPoint:
    def test_help(self):
        r = subprocess.run(["slmfg", "--help"], capture_output=True, text=True)
        assert r.returncode == 0 and "solve-nep" in r.stdout
