"""Problem containers, validation and the text file format."""

import pytest

from slmfg.corpus import IDS, builtin, corpus_path
from slmfg.model import (
    GnepProblem,
    ProblemFormatError,
    SlmfgProblem,
    ValidationError,
    dumps,
    load_problem,
    loads,
    save_problem,
    validate,
)

LEADER = 'leader { dim 1; objective "x.0"; }\n'


def follower(fid, cons=(), objective=None):
    body = f"  dim 1;\n  objective \"{objective or f'y.{fid}.0'}\";\n"
    body += "".join(f'  constraint "{c}";\n' for c in cons)
    return f"follower {fid} {{\n{body}}}\n"


class TestLoad:
    def test_first_example_shape(self):
        p = load_problem(corpus_path("ex1"))
        assert isinstance(p, SlmfgProblem)
        assert [(f.dim, len(f.constraints)) for f in p.followers] == [(2, 2), (2, 2)]
        assert str(p.leader.objective) == "x.0"

    def test_fourth_example_box(self):
        p = builtin("ex4").problem
        assert p.leader.box == ((0.0, 0.5),)

    def test_grouped_instance(self):
        g = loads(LEADER + follower("a") + follower("b") + 'group g { members a b; shared_constraint "(+ y.a.0 y.b.0 -1)"; }')
        assert isinstance(g, GnepProblem)
        assert len(g.groups) == 1 and g.groups[0].members == ("a", "b")

    def test_cross_follower_constraint_rejected(self):
        text = LEADER + follower("a", ["(+ y.a.0 y.b.0)"]) + follower("b")
        with pytest.raises(ValidationError, match="constraint 0"):
            loads(text)

    def test_parse_error_has_location(self):
        with pytest.raises(ProblemFormatError) as err:
            loads("leader { dim 1; objective \"x.0\" }")
        assert err.value.line == 1 and err.value.col is not None

    def test_undeclared_variable(self):
        with pytest.raises(ProblemFormatError, match="z.0"):
            loads(LEADER + follower("a", ["(+ y.a.0 z.0)"]))

    def test_missing_file(self):
        with pytest.raises(FileNotFoundError):
            load_problem("no/such/file.slmfg")

    def test_comments_ignored(self):
        p = loads("# header\n" + LEADER + "# between\n" + follower("a"))
        assert p.follower_ids == ("a",)


class TestValidate:
    def test_corpus_clean(self):
        for eid in IDS:
            assert validate(builtin(eid).problem) == []

    def test_duplicate_follower(self):
        p = builtin("ex3").problem
        bad = SlmfgProblem(p.leader, (p.followers[0], p.followers[0]))
        v = validate(bad)
        assert len([m for m in v if "duplicate follower" in m]) == 1

    def test_out_of_group_shared_constraint(self):
        text = (LEADER + follower("a") + follower("b") + follower("c")
                + 'group g { members a b; shared_constraint "(+ y.a.0 y.c.0)"; }\n'
                + "group h { members c; }\n")
        with pytest.raises(ValidationError) as err:
            loads(text)
        assert len(err.value.violations) == 1
        assert "out-of-group" in err.value.violations[0]

    def test_peer_dependent_objective(self):
        text = LEADER + follower("a", objective="(* y.a.0 y.b.0)") + follower("b") + "group g { members a b; }\n"
        with pytest.raises(ValidationError, match="same-group peer"):
            loads(text)

    def test_ungrouped_follower(self):
        text = LEADER + follower("a") + follower("b") + "group g { members a; }\n"
        with pytest.raises(ValidationError, match="no group"):
            loads(text)


class TestRoundTrip:
    @pytest.mark.parametrize("eid", IDS)
    def test_save_load_identity(self, eid, tmp_path):
        p = builtin(eid).problem
        path = tmp_path / f"{eid}.slmfg"
        save_problem(p, path)
        q = load_problem(path)
        assert q.leader == p.leader
        assert q.followers == p.followers
        assert getattr(q, "groups", None) == getattr(p, "groups", None)

    @pytest.mark.parametrize("eid", IDS)
    def test_dumps_stable(self, eid):
        p = builtin(eid).problem
        assert dumps(loads(dumps(p))) == dumps(p)
