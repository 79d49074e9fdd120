"""Built-in problem corpus with machine-checked expected facts.

Each entry ships as a plain ``.slmfg`` file next to this module.  Every fact
names the one operation that checks it and carries a provenance tag:

* ``reported``  - a claim stated for the worked example;
* ``derived``   - computed independently (closed form or direct evaluation);
* ``synthetic`` - a property of a constructed instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from ..config import DEFAULT, RunConfig
from ..model import GnepProblem, SlmfgProblem, load_problem

CORPUS_DIR = Path(__file__).resolve().parent
IDS = ("ex1", "ex2", "ex3", "ex4", "gnep1")

NOTES = {
    "ex1": "leader box [0, 4] added (equilibria exist only for x >= 0); f2's objective mirrors f1's",
    "ex2": "leader decision unconstrained; scans use the configured box",
    "ex3": "leader decision unconstrained; scans use the configured box",
    "ex4": "leader box [0, 1/2]",
    "gnep1": "synthetic: two budget groups of two followers, objectives (y - x)^2",
}


class UnknownEntry(KeyError):
    pass


Check = Callable[[object, RunConfig], "tuple[bool, str]"]


@dataclass(frozen=True)
class Fact:
    kind: str
    location: str
    expected: str
    provenance: str
    checker: str
    check: Check = field(repr=False, compare=False)


@dataclass
class CorpusEntry:
    id: str
    problem: SlmfgProblem | GnepProblem
    facts: list[Fact]
    note: str
    path: Path


def corpus_path(entry_id: str) -> Path:
    if entry_id not in IDS:
        raise UnknownEntry(f"unknown corpus entry {entry_id!r}; known: {', '.join(IDS)}")
    return CORPUS_DIR / f"{entry_id}.slmfg"


def builtin(entry_id: str) -> CorpusEntry:
    from . import facts

    path = corpus_path(entry_id)
    return CorpusEntry(entry_id, load_problem(path), facts.FACTS[entry_id](), NOTES[entry_id], path)


# ---------------------------------------------------------------------------
# running


@dataclass
class FactResult:
    entry: str
    index: int
    fact: Fact
    ok: bool
    observed: str


@dataclass
class CorpusReport:
    results: list[FactResult]
    cfg: RunConfig

    @property
    def passed(self) -> int:
        return sum(r.ok for r in self.results)

    @property
    def failed(self) -> int:
        return len(self.results) - self.passed

    @property
    def ok(self) -> bool:
        return self.failed == 0


def run_corpus(which: str | None = None, cfg: RunConfig | None = None) -> CorpusReport:
    """Execute every expected fact's checker; ``which`` selects one entry (or ``all``)."""
    cfg = cfg or DEFAULT
    ids = IDS if which in (None, "all") else (which,)
    results = []
    for eid in ids:
        entry = builtin(eid)
        for i, fact in enumerate(entry.facts, 1):
            try:
                ok, observed = fact.check(entry.problem, cfg)
            except Exception as exc:  # a crashing checker is a failed fact
                ok, observed = False, f"error: {type(exc).__name__}: {exc}"
            results.append(FactResult(eid, i, fact, bool(ok), observed))
    return CorpusReport(results, cfg)
