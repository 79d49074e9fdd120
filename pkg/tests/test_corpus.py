"""Built-in corpus: entries, fact metadata and the fact runner."""

from pathlib import Path

import pytest

from slmfg.corpus import IDS, CorpusReport, Fact, UnknownEntry, builtin, corpus_path, run_corpus
from slmfg.corpus.facts import FACTS
from slmfg.model import GnepProblem, SlmfgProblem

ROOT = Path(__file__).resolve().parents[1]
CHECKERS = {
    "nep.solve_nep", "nep.best_response", "nep.is_nash_equilibrium", "nep.check_existence_hypotheses",
    "multipliers.multiplier_polytope", "multipliers.enumerate_vertices", "multipliers.is_empty",
    "cq.check_slater", "cq.check_crcq", "cq.check_svensson",
    "verify.is_local_min_slmfg", "verify.is_local_min_mpcc", "verify.grid_global_slmfg", "verify.grid_global_mpcc",
    "verify.gate_t21", "verify.gate_t22", "verify.gate_t23", "verify.gate_t24", "verify.multiplier_sequence",
    "gnep.joint_convexity", "gnep.reduce_grouped_to_nep", "gnep.check_reduction_equivalence",
}


class TestEntries:
    @pytest.mark.parametrize("eid", IDS)
    def test_loads(self, eid):
        e = builtin(eid)
        assert e.id == eid and e.note and e.facts
        assert isinstance(e.problem, GnepProblem if eid == "gnep1" else SlmfgProblem)

    @pytest.mark.parametrize("eid", IDS)
    def test_plain_file_at_repo_root(self, eid):
        top = ROOT / "corpus" / f"{eid}.slmfg"
        assert top.read_text() == corpus_path(eid).read_text()

    def test_unknown(self):
        with pytest.raises(UnknownEntry, match="ex9"):
            builtin("ex9")

    def test_fact_count(self):
        assert sum(len(FACTS[e]()) for e in IDS) == 32


class TestFacts:
    @pytest.mark.parametrize("eid", IDS)
    def test_metadata(self, eid):
        for f in FACTS[eid]():
            assert f.provenance in ("reported", "derived", "synthetic")
            assert f.checker in CHECKERS, f.checker
            assert f.kind and f.location and f.expected

    def test_synthetic_entry_tags(self):
        assert {f.provenance for f in FACTS["gnep1"]()} == {"synthetic"}


class TestRunner:
    def test_crashing_checker_fails(self, monkeypatch):
        def boom(problem, cfg):
            raise RuntimeError("kaput")

        fake = [Fact("x", "here", "ok", "derived", "nep.solve_nep", boom)]
        monkeypatch.setitem(FACTS, "ex3", lambda: fake)
        r = run_corpus("ex3")
        assert not r.ok and r.failed == 1
        assert r.results[0].observed == "error: RuntimeError: kaput"

    def test_counts(self):
        r = CorpusReport([], None)
        assert r.ok and r.passed == r.failed == 0

    @pytest.mark.parametrize("eid", ["ex1", "ex4", "gnep1"])
    def test_entry_passes(self, eid):
        r = run_corpus(eid)
        assert r.ok, [(x.fact.location, x.observed) for x in r.results if not x.ok]

    def test_full_corpus(self):
        r = run_corpus("all")
        assert (r.passed, r.failed) == (32, 0), [(x.entry, x.fact.location, x.observed) for x in r.results if not x.ok]
