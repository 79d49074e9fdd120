"""Expression parsing, evaluation, differentiation and convexity."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import VARS, central_difference, exprs, points, random_expr
from slmfg.corpus import IDS, builtin
from slmfg.expr import (
    Const,
    Convexity,
    MissingVariable,
    ParseError,
    Power,
    Product,
    Sum,
    UndeclaredVariable,
    Var,
    VarId,
    classify_convexity,
    diff,
    evaluate,
    grad,
    hessian,
    parse_expr,
    simplify,
    to_text,
    variables,
)

X = VarId("x", 0)
Y0, Y1 = VarId("y.f1", 0), VarId("y.f1", 1)
DECL = {X, Y0, Y1}


def corpus_expressions():
    out = []
    for eid in IDS:
        p = builtin(eid).problem
        out.append(p.leader.objective)
        for f in p.followers:
            out += [f.objective, *f.constraints]
        for g in getattr(p, "groups", ()):
            out += list(g.shared)
    return out


class TestParse:
    def test_sum_with_power(self):
        e = parse_expr("(+ x.0 (^ y.f1.1 2))", DECL)
        assert e == Sum((Var(X), Power(Var(Y1), 2)))

    def test_negative_constant_product(self):
        assert parse_expr("(* -1 x.0)", DECL) == Product((Const(-1), Var(X)))

    def test_undeclared_variable_named(self):
        with pytest.raises(UndeclaredVariable, match="z.0"):
            parse_expr("(+ z.0 1)", DECL)

    @pytest.mark.parametrize("text", ["(+ x.0", "(/ x.0 2)", "(^ x.0 -1)", "(^ x.0 1.5)", "x.0 x.0", ")"])
    def test_syntax_errors(self, text):
        with pytest.raises(ParseError):
            parse_expr(text, DECL)

    def test_error_reports_position(self):
        with pytest.raises(ParseError) as err:
            parse_expr("(+ x.0 (? 1))", DECL)
        assert "8" in str(err.value) or "9" in str(err.value)

    def test_round_trip_corpus(self):
        for e in corpus_expressions():
            assert parse_expr(to_text(e)) == e

    @given(exprs)
    def test_round_trip_random(self, e):
        assert parse_expr(to_text(e)) == e


class TestEvaluate:
    def test_example_constraint_at_closed_form(self):
        # g1 = y0^2 - y1 - x at x = 2, y = (-1, -1)
        g = parse_expr("(+ (^ y.f1.0 2) (neg y.f1.1) (neg x.0))", DECL)
        assert evaluate(g, {X: 2.0, Y0: -1.0, Y1: -1.0}) == 0.0

    def test_constant(self):
        assert evaluate(Const(5), {}) == 5.0

    def test_empty_conventions(self):
        assert evaluate(Sum(()), {}) == 0.0
        assert evaluate(Product(()), {}) == 1.0

    def test_missing_variable(self):
        with pytest.raises(MissingVariable):
            evaluate(Var(X), {})

    def test_vectorized(self):
        e = parse_expr("(* x.0 (^ y.f1.0 2))", DECL)
        v = evaluate(e, {X: np.array([1.0, 2.0]), Y0: np.array([3.0, 1.0])})
        np.testing.assert_array_equal(v, [9.0, 2.0])


class TestDiff:
    def test_power_rule(self):
        e = parse_expr("(+ (^ y.f1.0 2) (neg y.f1.1))", DECL)
        d = diff(e, Y0)
        for v in (-1.5, 0.0, 2.0):
            assert evaluate(d, {Y0: v, Y1: 0.3}) == pytest.approx(2 * v)

    def test_product_rule(self):
        e = parse_expr("(* x.0 (^ y.f1.0 2))", DECL)
        assert simplify(diff(e, X)) == simplify(Power(Var(Y0), 2))

    def test_disk_constraint(self):
        e = parse_expr("(+ (^ (+ y.f1.0 (neg x.0)) 2) (^ (+ y.f1.1 (neg x.0) -1) 2) -1)", DECL)
        d = diff(e, Y0)
        a = {X: 0.3, Y0: 1.1, Y1: -0.4}
        assert evaluate(d, a) == pytest.approx(2 * (1.1 - 0.3))

    def test_grad_linear(self):
        e = parse_expr("(+ y.f1.0 y.f1.1)", DECL)
        assert [evaluate(g, {}) for g in map(simplify, grad(e, [Y0, Y1]))] == [1.0, 1.0]

    def test_grad_of_first_example_objective(self):
        p = builtin("ex1").problem
        f = p.follower("f1")
        g = [simplify(d) for d in grad(f.objective, f.variables)]
        assert [evaluate(d, {}) for d in g] == [1.0, 0.0]

    def test_grad_constant(self):
        assert all(evaluate(d, {}) == 0.0 for d in grad(Const(3), [Y0, Y1]))

    @settings(max_examples=100, deadline=None)
    @given(exprs, points)
    def test_matches_finite_difference(self, e, pt):
        a = dict(zip(VARS, pt))
        val = float(evaluate(e, a))
        for v in VARS:
            fd = central_difference(e, a, v)
            assert abs(float(evaluate(diff(e, v), a)) - fd) <= 1e-6 * (1 + abs(val) + abs(fd))

    @given(exprs, exprs, points)
    def test_linearity(self, e1, e2, pt):
        a = dict(zip(VARS, pt))
        v = VARS[0]
        lhs = float(evaluate(diff(Sum((e1, e2)), v), a))
        rhs = float(evaluate(diff(e1, v), a)) + float(evaluate(diff(e2, v), a))
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)

    def test_corpus_finite_difference(self):
        rng = np.random.default_rng(0)
        for e in corpus_expressions():
            vs = sorted(variables(e), key=str)
            for _ in range(100):
                a = {v: float(rng.uniform(-2, 2)) for v in vs}
                val = float(evaluate(e, a))
                for v in vs:
                    fd = central_difference(e, a, v)
                    assert abs(float(evaluate(diff(e, v), a)) - fd) <= 1e-6 * (1 + abs(val))


class TestHessian:
    def test_sum_of_squares(self):
        e = parse_expr("(+ (^ y.f1.0 2) (^ y.f1.1 2))", DECL)
        H = [[evaluate(h, {}) for h in row] for row in hessian(e, [Y0, Y1])]
        assert H == [[2.0, 0.0], [0.0, 2.0]]

    def test_parametric(self):
        e = parse_expr("(* x.0 (^ y.f1.0 2))", DECL)
        (h,), = hessian(e, [Y0])
        assert evaluate(h, {X: 1.5, Y0: 0.0}) == pytest.approx(3.0)

    def test_linear_is_zero(self):
        e = parse_expr("(+ y.f1.0 (* 3 y.f1.1) x.0)", DECL)
        assert all(evaluate(h, {}) == 0.0 for row in hessian(e, [Y0, Y1]) for h in row)

    @given(exprs, points)
    def test_symmetric(self, e, pt):
        a = dict(zip(VARS, pt))
        H = np.array([[float(evaluate(h, a)) for h in row] for row in hessian(e, VARS)])
        np.testing.assert_allclose(H, H.T, atol=1e-12 * (1 + np.abs(H).max()))

    @given(exprs)
    def test_symmetric_trees_after_simplify(self, e):
        H = hessian(e, VARS[:2])
        assert simplify(H[0][1]) == simplify(H[1][0])


class TestConvexity:
    def test_sum_of_squares_certified(self):
        e = parse_expr("(+ (^ y.f1.0 2) (^ y.f1.1 2))", DECL)
        assert classify_convexity(e, [Y0, Y1]).kind is Convexity.CONVEX_CERTIFIED

    def test_not_jointly_convex(self):
        e = parse_expr("(* x.0 (^ y.f1.0 2))", DECL)
        v = classify_convexity(e, [X, Y0], domain_box={X: (-1, 1), Y0: (-1, 1)})
        assert v.kind is Convexity.NONCONVEX_WITNESS
        assert v.witness is not None

    def test_convex_with_fixed_parameter(self):
        e = parse_expr("(* x.0 (^ y.f1.0 2))", DECL)
        assert classify_convexity(e, [Y0], fixed={X: 1.0}).kind is Convexity.CONVEX_CERTIFIED

    def test_quartic_is_never_certified(self):
        e = parse_expr("(^ y.f1.0 4)", DECL)
        assert classify_convexity(e, [Y0], domain_box={Y0: (-1, 1)}).kind is Convexity.UNKNOWN

    def test_nonconvex_quartic_witness(self):
        e = parse_expr("(neg (^ y.f1.0 4))", DECL)
        assert classify_convexity(e, [Y0], domain_box={Y0: (-1, 1)}).kind is Convexity.NONCONVEX_WITNESS

    def test_empty_box_rejected(self):
        e = parse_expr("(^ y.f1.0 4)", DECL)
        with pytest.raises(ValueError):
            classify_convexity(e, [Y0], domain_box={Y0: (1, -1)})

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_quadratics_agree_with_direction_sampling(self, seed):
        rng = np.random.default_rng(seed)
        M = rng.integers(-2, 3, size=(3, 3)).astype(float)
        Q = M + M.T
        e = Sum(tuple(Product((Const(Q[i, j] / 2), Var(VARS[i]), Var(VARS[j]))) for i in range(3) for j in range(3)))
        verdict = classify_convexity(e, VARS)
        dirs = rng.standard_normal((1000, 3))
        psd = bool(np.all(np.einsum("ki,ij,kj->k", dirs, Q, dirs) >= -1e-9))
        assert verdict.kind in (Convexity.CONVEX_CERTIFIED, Convexity.NONCONVEX_WITNESS)
        if verdict.kind is Convexity.NONCONVEX_WITNESS:
            assert not psd or np.linalg.eigvalsh(Q).min() < 0
        else:
            assert psd


class TestRandomGenerator:
    def test_deterministic(self):
        a = [to_text(random_expr(np.random.default_rng(3))) for _ in range(2)]
        assert a[0] == a[1]
