"""Multiplier polytopes and vertex enumeration."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_polytope
from slmfg.corpus import builtin
from slmfg.mpcc import build_mpcc, kkt_residual
from slmfg.multipliers import (
    ActiveSet,
    EmptyPolytope,
    InfeasiblePoint,
    MultiplierPolytope,
    brute_force_vertices,
    enumerate_vertices,
    is_empty,
    multiplier_polytope,
    sample_multipliers,
)

Z2 = [np.zeros(2), np.zeros(2)]


def as_set(vs, nd=7):
    return sorted(tuple(round(float(t), nd) + 0.0 for t in v) for v in vs)


def polytope(A, b):
    A = np.asarray(A, dtype=float)
    k = A.shape[1]
    return MultiplierPolytope(ActiveSet("f", tuple(range(k)), k, 1e-6), A, np.asarray(b, dtype=float), np.zeros(k))


def ex1_point(x):
    r = -math.sqrt(x / 2)
    return [np.array([r, -x / 2]), np.array([r, -x / 2])]


class TestAssembly:
    def test_fourth_example_origin(self):
        poly = multiplier_polytope(builtin("ex4").problem, "f1", [0.0], Z2)
        np.testing.assert_allclose(poly.A, [[0, 0], [-2, -2]])
        # b = -grad F = -(0, 2)
        np.testing.assert_allclose(poly.b, [0, -2])
        assert poly.active.indices == (0, 1)
        assert poly.rank() == 1

    def test_first_example_unique_multiplier(self):
        poly = multiplier_polytope(builtin("ex1").problem, "f1", [2.0], ex1_point(2.0))
        vs = enumerate_vertices(poly)
        assert len(vs) == 1
        np.testing.assert_allclose(vs[0], [0.25, 0.25], atol=1e-12)

    def test_first_example_empty_at_zero(self):
        poly = multiplier_polytope(builtin("ex1").problem, "f1", [0.0], Z2)
        np.testing.assert_allclose(poly.A, [[0, 0], [-1, 1]])
        np.testing.assert_allclose(poly.b, [-1, 0])
        assert is_empty(poly)
        with pytest.raises(EmptyPolytope):
            enumerate_vertices(poly)

    def test_emptiness_flags(self):
        p1, p4 = builtin("ex1").problem, builtin("ex4").problem
        flags = [
            is_empty(multiplier_polytope(p4, "f1", [0.0], Z2)),
            is_empty(multiplier_polytope(p1, "f1", [2.0], ex1_point(2.0))),
            is_empty(multiplier_polytope(p1, "f1", [0.0], Z2)),
        ]
        assert flags == [False, False, True]

    def test_infeasible_point(self):
        with pytest.raises(InfeasiblePoint):
            multiplier_polytope(builtin("ex4").problem, "f1", [0.0], [np.array([0.0, 5.0]), np.zeros(2)])

    def test_inactive_constraints_zero(self):
        # third example at x = 0.5, y = 0.5: only y <= 1 - x is active
        poly = multiplier_polytope(builtin("ex3").problem, "f1", [0.5], [np.array([0.5]), np.array([0.5])])
        assert poly.active.indices == (0,)
        (v,) = enumerate_vertices(poly)
        np.testing.assert_allclose(v, [1.0, 0.0])


class TestVertices:
    def test_segment(self):
        poly = multiplier_polytope(builtin("ex4").problem, "f1", [0.0], Z2)
        assert as_set(enumerate_vertices(poly), 9) == [(0.0, 1.0), (1.0, 0.0)]

    def test_third_example_at_zero(self):
        poly = multiplier_polytope(builtin("ex3").problem, "f1", [0.0], [np.ones(1), np.ones(1)])
        assert as_set(enumerate_vertices(poly)) == [(0.0, 1.0), (1.0, 0.0)]

    def test_unbounded_has_rays(self):
        poly = polytope([[1, -1]], [1])
        assert as_set(poly.vertices()) == [(1.0, 0.0)]
        assert not poly.bounded
        assert as_set(poly.rays()) == [(0.5, 0.5)]  # normalized to unit 1-norm

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 100_000))
    def test_matches_brute_force(self, seed):
        A, b = random_polytope(np.random.default_rng(seed))
        assert as_set(polytope(A, b).vertices()) == as_set(brute_force_vertices(A, b))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 100_000))
    def test_vertex_feasible_and_extreme(self, seed):
        rng = np.random.default_rng(seed)
        A, b = random_polytope(rng)
        poly = polytope(A, b)
        # directions in the null space of A (the affine hull of the equality set)
        _, s, Vt = np.linalg.svd(A)
        null = Vt[(s > 1e-9).sum():]
        for v in poly.vertices():
            np.testing.assert_allclose(A @ v, b, atol=1e-9)
            assert v.min() >= -1e-9
            if null.size == 0:
                continue
            for _ in range(200):
                d = rng.standard_normal(null.shape[0]) @ null
                d /= np.linalg.norm(d)
                both = all(poly.contains(v + s_ * 1e-4 * d, tol=1e-12) for s_ in (1, -1))
                assert not both


class TestSampling:
    def test_on_segment(self):
        poly = multiplier_polytope(builtin("ex4").problem, "f1", [0.0], Z2)
        pts = sample_multipliers(poly, 3, seed=7)
        assert len(pts) == 3
        for lam in pts:
            assert lam.min() >= 0 and lam.sum() == pytest.approx(1.0)

    def test_deterministic(self):
        poly = multiplier_polytope(builtin("ex4").problem, "f1", [0.0], Z2)
        a = sample_multipliers(poly, 4, seed=3)
        b = sample_multipliers(poly, 4, seed=3)
        np.testing.assert_array_equal(a, b)

    def test_singleton(self):
        poly = multiplier_polytope(builtin("ex1").problem, "f1", [2.0], ex1_point(2.0))
        pts = sample_multipliers(poly, 5)
        assert len(pts) == 5
        np.testing.assert_allclose(pts, [[0.25, 0.25]] * 5, atol=1e-12)

    def test_zero(self):
        poly = multiplier_polytope(builtin("ex4").problem, "f1", [0.0], Z2)
        assert sample_multipliers(poly, 0) == []

    def test_samples_satisfy_kkt(self):
        p = builtin("ex4").problem
        m = build_mpcc(p)
        polys = [multiplier_polytope(p, f.id, [0.0], Z2) for f in p.followers]
        for l1, l2 in zip(sample_multipliers(polys[0], 6, seed=1), sample_multipliers(polys[1], 6, seed=2)):
            q = m.join([0.0], Z2, [l1, l2])
            assert kkt_residual(m, q).total <= 1e-8


class TestSequence:
    def test_converges_to_midpoint(self):
        # lowest point of the lens: y = (0, x + 1 - sqrt(1 - x^2)); lam = (y1 + 1) / (2 sqrt(1 - x^2))
        p = builtin("ex4").problem
        for k in (10, 100, 1000, 10_000):
            x = 1 / k
            s = math.sqrt(1 - x * x)
            y = np.array([0.0, x + 1 - s])
            (v,) = enumerate_vertices(multiplier_polytope(p, "f1", [x], [y, y]))
            lam = (y[1] + 1) / (2 * s)
            np.testing.assert_allclose(v, [lam, lam], atol=1e-9)
        assert abs(lam - 0.5) < 1e-4
