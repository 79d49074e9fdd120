"""Follower Nash equilibria: best responses, certification and the grid oracle."""

import math

import numpy as np
import pytest

from slmfg.config import DEFAULT
from slmfg.corpus import builtin
from slmfg.expr import Const, Sum
from slmfg.gnep import reduce_grouped_to_nep
from slmfg.model import FollowerProblem, SlmfgProblem
from slmfg.nep import (
    Bullet,
    Status,
    Unbounded,
    best_response,
    brute_force_nep,
    check_existence_hypotheses,
    is_nash_equilibrium,
    solve_nep,
)

STEP = 0.05


def problem(eid):
    p = builtin(eid).problem
    return reduce_grouped_to_nep(p) if eid == "gnep1" else p


def inf_dist(A, B):
    """Largest distance from a point of A to its nearest point of B (inf-norm)."""
    B = np.asarray(B)
    return max(float(np.min(np.abs(B - a).max(axis=1))) for a in A)


class TestBestResponse:
    def test_first_example(self):
        (y,) = best_response(builtin("ex1").problem, "f1", [2.0], [[0.3, -0.2]])
        np.testing.assert_allclose(y, [-1.0, -1.0], atol=1e-7)

    def test_third_example(self):
        (y,) = best_response(builtin("ex3").problem, "f1", [1 / 3], [[0.0]])
        np.testing.assert_allclose(y, [2 / 3], atol=1e-8)

    def test_second_example_unbounded(self):
        with pytest.raises(Unbounded):
            best_response(builtin("ex2").problem, "f1", [-1.0], [[0.0]])

    def test_constant_shift_invariant(self):
        p = builtin("ex4").problem
        f = p.follower("f1")
        shifted = FollowerProblem(f.id, f.dim, Sum((f.objective, Const(7.5))), f.constraints, f.variables)
        q = SlmfgProblem(p.leader, (shifted, p.followers[1]))
        rng = np.random.default_rng(0)
        for _ in range(5):
            x = [float(rng.uniform(0, 0.5))]
            rival = [rng.uniform(-1, 1, 2).tolist()]
            a = best_response(p, "f1", x, rival)
            b = best_response(q, "f1", x, rival)
            np.testing.assert_allclose(a, b, atol=1e-8)


class TestSolve:
    @pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
    def test_first_example_closed_form(self, x):
        sol = solve_nep(builtin("ex1").problem, [x])
        r = -math.sqrt(x / 2)
        assert len(sol.equilibria) == 1
        np.testing.assert_allclose(sol.equilibria[0].point, [r, -x / 2, r, -x / 2], atol=1e-6)

    def test_second_example_origin(self):
        sol = solve_nep(builtin("ex2").problem, [1.0])
        assert [e.point for e in sol.equilibria] == [[0.0, 0.0]]

    def test_second_example_continuum(self):
        sol = solve_nep(builtin("ex2").problem, [0.0])
        assert sol.continuum_suspected

    def test_third_example(self):
        sol = solve_nep(builtin("ex3").problem, [0.0])
        assert len(sol.equilibria) == 1
        np.testing.assert_allclose(sol.equilibria[0].point, [1.0, 1.0], atol=1e-9)

    @pytest.mark.parametrize("eid", ["ex1", "ex3", "ex4", "gnep1"])
    def test_self_consistent(self, eid):
        p = problem(eid)
        x = {"ex1": 1.3, "ex3": 0.2, "ex4": 0.25, "gnep1": 0.7}[eid]
        for e in solve_nep(p, [x]).equilibria:
            assert is_nash_equilibrium(p, [x], e.point).ok


class TestCertify:
    def test_kkt_failure_still_equilibrium(self):
        v = is_nash_equilibrium(builtin("ex1").problem, [0.0], [0.0] * 4)
        assert v.ok and v.certificate.max_gap == 0.0

    def test_third_example_equilibrium(self):
        assert is_nash_equilibrium(builtin("ex3").problem, [0.0], [1.0, 1.0]).ok

    def test_third_example_not_equilibrium(self):
        v = is_nash_equilibrium(builtin("ex3").problem, [0.0], [0.5, 0.5])
        assert v.status is Status.NOT_EQUILIBRIUM
        assert v.certificate.max_gap > 0

    def test_infeasible_reported_distinctly(self):
        v = is_nash_equilibrium(builtin("ex3").problem, [0.0], [2.0, 1.0])
        assert v.status is Status.INFEASIBLE


class TestOracle:
    @pytest.mark.parametrize(
        "eid, xs",
        [
            ("ex2", np.linspace(0.1, 2, 20)),
            ("ex3", np.linspace(-1, 1, 20)),
            ("ex4", np.linspace(0, 0.5, 20)),
            ("gnep1", np.linspace(-1, 1, 20)),
        ],
    )
    def test_agrees_with_brute_force(self, eid, xs):
        p = problem(eid)
        for x in xs:
            S = [e.point for e in solve_nep(p, [x]).equilibria]
            B = brute_force_nep(p, [x], STEP)
            assert S and B
            assert inf_dist(S, B) <= STEP + 1e-9
            assert inf_dist(B, S) <= STEP + 1e-9

    @pytest.mark.parametrize("x", [0.5, 2.0])
    def test_first_example_on_grid_aligned_probes(self, x):
        # the closed form lies on the grid here, so the grid argmin is exact
        p = builtin("ex1").problem
        S = [e.point for e in solve_nep(p, [x]).equilibria]
        B = brute_force_nep(p, [x], STEP)
        assert inf_dist(S, B) <= 1e-9 and inf_dist(B, S) <= 1e-9

    def test_first_example_grid_ties_spread(self):
        # the follower is indifferent to its second coordinate: at the best grid
        # value of y0 the whole lens cross-section ties, wider than one step
        p = builtin("ex1").problem
        B = np.array(brute_force_nep(p, [3.632], STEP))
        assert np.ptp(B[:, 1]) > STEP

    def test_grid_continuum(self):
        assert len(brute_force_nep(builtin("ex2").problem, [0.0], 0.5)) == 13**2


class TestExistence:
    def test_first_example_all_hold(self):
        r = check_existence_hypotheses(builtin("ex1").problem, [1.0])
        for name in ("nonempty", "convex_set", "objective_convex", "compact"):
            assert r.bullet(name) is Bullet.HOLDS

    def test_second_example_not_compact(self):
        r = check_existence_hypotheses(builtin("ex2").problem, [-1.0])
        assert r.bullet("nonempty") is Bullet.HOLDS
        assert r.bullet("convex_set") is Bullet.HOLDS
        assert r.bullet("compact") is Bullet.FAILS

    def test_third_example_not_compact(self):
        r = check_existence_hypotheses(builtin("ex3").problem, [0.3])
        assert r.bullet("objective_convex") is Bullet.HOLDS
        assert r.bullet("compact") is Bullet.FAILS
        # equilibria exist regardless
        assert solve_nep(builtin("ex3").problem, [0.3], DEFAULT).found
