"""Random instances and oracles shared by the test suites."""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from slmfg.expr import Const, Negate, Power, Product, Sum, Var, VarId, evaluate

VARS = (VarId("a", 0), VarId("a", 1), VarId("a", 2))


def random_expr(rng: np.random.Generator, depth: int = 3, vars_=VARS):
    """Random polynomial tree with small constants and exponents <= 3."""
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.6:
            return Var(vars_[rng.integers(len(vars_))])
        return Const(float(rng.integers(-3, 4)) / 2)
    kind = rng.integers(4)
    if kind == 0:
        return Sum(tuple(random_expr(rng, depth - 1, vars_) for _ in range(rng.integers(0, 4))))
    if kind == 1:
        return Product(tuple(random_expr(rng, depth - 1, vars_) for _ in range(rng.integers(0, 3))))
    if kind == 2:
        return Power(random_expr(rng, depth - 1, vars_), int(rng.integers(0, 4)))
    return Negate(random_expr(rng, depth - 1, vars_))


def _leaf():
    return st.one_of(
        st.sampled_from(VARS).map(Var),
        st.integers(-4, 4).map(lambda k: Const(k / 2)),
    )


def _node(children):
    return st.one_of(
        st.lists(children, max_size=3).map(lambda ts: Sum(tuple(ts))),
        st.lists(children, max_size=3).map(lambda fs: Product(tuple(fs))),
        st.tuples(children, st.integers(0, 3)).map(lambda t: Power(*t)),
        children.map(Negate),
    )


exprs = st.recursive(_leaf(), _node, max_leaves=12)
points = st.lists(st.floats(-2, 2, allow_nan=False), min_size=3, max_size=3)


def central_difference(e, a: dict, v: VarId, h: float = 1e-5) -> float:
    hi, lo = dict(a), dict(a)
    hi[v] = a[v] + h
    lo[v] = a[v] - h
    return (float(evaluate(e, hi)) - float(evaluate(e, lo))) / (2 * h)


def random_polytope(rng: np.random.Generator):
    """Small {lam >= 0 : A lam = b} with a known feasible point (nonempty)."""
    n = int(rng.integers(1, 3))
    p = int(rng.integers(n, 5))
    A = rng.integers(-2, 3, size=(n, p)).astype(float)
    lam0 = rng.integers(0, 3, size=p).astype(float)
    # make the set bounded most of the time: add a positive row
    if rng.random() < 0.8:
        A[0] = np.abs(A[0]) + 1
    return A, A @ lam0
