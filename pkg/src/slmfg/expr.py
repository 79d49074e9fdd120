"""Polynomial expression trees over named scalar variables.

Expressions are immutable trees built from ``Const``, ``Var``, ``Sum``,
``Product``, ``Power`` and ``Negate``.  Evaluation accepts floats or numpy
arrays as variable values, so the same tree can be evaluated pointwise or
over a whole grid at once.

Text form is a prefix (s-expression) grammar::

    expr   := number | varref | "(" op expr* ")"
    op     := "+" | "*" | "^" | "neg"
    varref := block "." index        e.g. x.0, y.f1.1, lam.f2.0
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np


class ExprError(ValueError):
    pass


class ParseError(ExprError):
    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at offset {position})"
        super().__init__(message)


class UndeclaredVariable(ExprError):
    def __init__(self, var: "VarId"):
        self.var = var
        super().__init__(f"undeclared variable {var}")


class MissingVariable(ExprError, KeyError):
    def __init__(self, var: "VarId"):
        self.var = var
        ExprError.__init__(self, f"no value for variable {var}")

    def __str__(self):
        return self.args[0]


@dataclass(frozen=True, order=True)
class VarId:
    block: str
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ExprError(f"negative index in variable {self.block}.{self.index}")

    def __str__(self):
        return f"{self.block}.{self.index}"

    @classmethod
    def parse(cls, text: str) -> "VarId":
        block, sep, idx = text.rpartition(".")
        if not sep or not block or not idx.isdigit():
            raise ExprError(f"malformed variable reference {text!r}")
        return cls(block, int(idx))


def block_vars(block: str, dim: int) -> tuple[VarId, ...]:
    return tuple(VarId(block, i) for i in range(dim))


class Expr:
    """Base class; concrete node types are frozen dataclasses."""

    __slots__ = ()

    # convenience builders, used when assembling KKT systems
    def __add__(self, other):
        return Sum((self, as_expr(other)))

    def __radd__(self, other):
        return Sum((as_expr(other), self))

    def __sub__(self, other):
        return Sum((self, Negate(as_expr(other))))

    def __rsub__(self, other):
        return Sum((as_expr(other), Negate(self)))

    def __mul__(self, other):
        return Product((self, as_expr(other)))

    def __rmul__(self, other):
        return Product((as_expr(other), self))

    def __neg__(self):
        return Negate(self)

    def __pow__(self, n: int):
        return Power(self, n)

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True, eq=True)
class Var(Expr):
    var: VarId


@dataclass(frozen=True, eq=True)
class Sum(Expr):
    terms: tuple[Expr, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))


@dataclass(frozen=True, eq=True)
class Product(Expr):
    factors: tuple[Expr, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))


@dataclass(frozen=True, eq=True)
class Power(Expr):
    base: Expr
    exponent: int

    def __post_init__(self):
        if int(self.exponent) != self.exponent or self.exponent < 0:
            raise ExprError(f"exponent must be a nonnegative integer, got {self.exponent!r}")
        object.__setattr__(self, "exponent", int(self.exponent))


@dataclass(frozen=True, eq=True)
class Negate(Expr):
    arg: Expr


ZERO = Const(0.0)
ONE = Const(1.0)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, VarId):
        return Var(value)
    return Const(float(value))


def children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, Sum):
        return e.terms
    if isinstance(e, Product):
        return e.factors
    if isinstance(e, Power):
        return (e.base,)
    if isinstance(e, Negate):
        return (e.arg,)
    return ()


def variables(e: Expr) -> frozenset[VarId]:
    found: set[VarId] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            found.add(node.var)
        else:
            stack.extend(children(node))
    return frozenset(found)


# ---------------------------------------------------------------------------
# text form

_TOKEN = re.compile(r"\s*(?:(\()|(\))|([^\s()]+))")
_NUMBER = re.compile(r"[-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?$")


def _tokenize(text: str):
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                return
            raise ParseError("unexpected character", pos)
        if m.end() == pos:
            return
        start = m.start(m.lastindex)
        yield m.group(m.lastindex), start
        pos = m.end()


def parse_expr(text: str, declared_vars: Iterable[VarId] | None = None) -> Expr:
    """Parse prefix text into an expression tree.

    When ``declared_vars`` is given, every variable reference must belong to it.
    """
    declared = None if declared_vars is None else frozenset(declared_vars)
    tokens = list(_tokenize(text))
    if not tokens:
        raise ParseError("empty expression", 0)
    expr, nxt = _parse_at(tokens, 0, declared)
    if nxt != len(tokens):
        raise ParseError(f"trailing input {tokens[nxt][0]!r}", tokens[nxt][1])
    return expr


def _parse_at(tokens, i, declared):
    if i >= len(tokens):
        raise ParseError("unexpected end of input", tokens[-1][1] if tokens else 0)
    tok, pos = tokens[i]
    if tok == ")":
        raise ParseError("unexpected ')'", pos)
    if tok != "(":
        return _parse_atom(tok, pos, declared), i + 1
    if i + 1 >= len(tokens):
        raise ParseError("unexpected end of input after '('", pos)
    op, op_pos = tokens[i + 1]
    if op not in ("+", "*", "^", "neg"):
        raise ParseError(f"unknown operator {op!r}", op_pos)
    args = []
    j = i + 2
    while True:
        if j >= len(tokens):
            raise ParseError("missing ')'", pos)
        if tokens[j][0] == ")":
            break
        arg, j = _parse_at(tokens, j, declared)
        args.append(arg)
    j += 1
    if op == "+":
        return Sum(tuple(args)), j
    if op == "*":
        return Product(tuple(args)), j
    if op == "neg":
        if len(args) != 1:
            raise ParseError("'neg' takes exactly one argument", op_pos)
        return Negate(args[0]), j
    if len(args) != 2:
        raise ParseError("'^' takes a base and an exponent", op_pos)
    base, exp = args
    if not isinstance(exp, Const) or exp.value < 0 or not float(exp.value).is_integer():
        raise ParseError("'^' exponent must be a nonnegative integer literal", op_pos)
    return Power(base, int(exp.value)), j


def _parse_atom(tok: str, pos: int, declared):
    if _NUMBER.match(tok):
        return Const(float(tok))
    try:
        var = VarId.parse(tok)
    except ExprError as exc:
        raise ParseError(str(exc), pos) from None
    if declared is not None and var not in declared:
        raise UndeclaredVariable(var)
    return Var(var)


def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_text(e: Expr) -> str:
    if isinstance(e, Const):
        return _fmt_number(e.value)
    if isinstance(e, Var):
        return str(e.var)
    if isinstance(e, Sum):
        return "(+" + "".join(" " + to_text(t) for t in e.terms) + ")"
    if isinstance(e, Product):
        return "(*" + "".join(" " + to_text(f) for f in e.factors) + ")"
    if isinstance(e, Power):
        return f"(^ {to_text(e.base)} {e.exponent})"
    if isinstance(e, Negate):
        return f"(neg {to_text(e.arg)})"
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# evaluation and calculus


def evaluate(e: Expr, assignment: Mapping[VarId, object]):
    """Evaluate ``e``; values may be floats or broadcast-compatible arrays."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return assignment[e.var]
        except KeyError:
            raise MissingVariable(e.var) from None
    if isinstance(e, Sum):
        total = 0.0
        for t in e.terms:
            total = total + evaluate(t, assignment)
        return total
    if isinstance(e, Product):
        prod = 1.0
        for f in e.factors:
            prod = prod * evaluate(f, assignment)
        return prod
    if isinstance(e, Power):
        return evaluate(e.base, assignment) ** e.exponent
    if isinstance(e, Negate):
        return -evaluate(e.arg, assignment)
    raise TypeError(f"not an expression: {e!r}")


def diff(e: Expr, v: VarId) -> Expr:
    """Exact partial derivative.  Subtrees free of ``v`` are pruned symbolically."""
    if v not in variables(e):
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Sum):
        return Sum(tuple(diff(t, v) for t in e.terms if v in variables(t)))
    if isinstance(e, Product):
        terms = []
        for i, f in enumerate(e.factors):
            if v not in variables(f):
                continue
            factors = list(e.factors)
            factors[i] = diff(f, v)
            terms.append(Product(tuple(factors)))
        return Sum(tuple(terms))
    if isinstance(e, Power):
        if e.exponent == 0:
            return ZERO
        if e.exponent == 1:
            return diff(e.base, v)
        return Product((Const(e.exponent), Power(e.base, e.exponent - 1), diff(e.base, v)))
    if isinstance(e, Negate):
        return Negate(diff(e.arg, v))
    raise TypeError(f"not an expression: {e!r}")


def grad(e: Expr, vars: Sequence[VarId]) -> list[Expr]:
    return [diff(e, v) for v in vars]


def hessian(e: Expr, vars: Sequence[VarId]) -> list[list[Expr]]:
    """Matrix of second partials in canonical polynomial form (exactly symmetric)."""
    first = [diff(e, v) for v in vars]
    return [[simplify(diff(first[i], vars[j])) for j in range(len(vars))] for i in range(len(vars))]


def substitute(e: Expr, values: Mapping[VarId, float]) -> Expr:
    if isinstance(e, Var):
        return Const(values[e.var]) if e.var in values else e
    if isinstance(e, Const):
        return e
    if isinstance(e, Sum):
        return Sum(tuple(substitute(t, values) for t in e.terms))
    if isinstance(e, Product):
        return Product(tuple(substitute(f, values) for f in e.factors))
    if isinstance(e, Power):
        return Power(substitute(e.base, values), e.exponent)
    if isinstance(e, Negate):
        return Negate(substitute(e.arg, values))
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# polynomial normal form

Monomial = tuple[tuple[VarId, int], ...]


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    powers = dict(a)
    for var, k in b:
        powers[var] = powers.get(var, 0) + k
    return tuple(sorted(powers.items()))


def _poly_mul(p: dict, q: dict) -> dict:
    out: dict = {}
    for ma, ca in p.items():
        for mb, cb in q.items():
            m = _mono_mul(ma, mb)
            out[m] = out.get(m, 0.0) + ca * cb
    return {m: c for m, c in out.items() if c != 0.0}


def to_poly(e: Expr) -> dict[Monomial, float]:
    """Expand into {monomial: coefficient}; the empty monomial is the constant term."""
    if isinstance(e, Const):
        return {(): e.value} if e.value != 0.0 else {}
    if isinstance(e, Var):
        return {((e.var, 1),): 1.0}
    if isinstance(e, Sum):
        out: dict = {}
        for t in e.terms:
            for m, c in to_poly(t).items():
                out[m] = out.get(m, 0.0) + c
        return {m: c for m, c in out.items() if c != 0.0}
    if isinstance(e, Product):
        out = {(): 1.0}
        for f in e.factors:
            out = _poly_mul(out, to_poly(f))
        return out
    if isinstance(e, Power):
        base = to_poly(e.base)
        out = {(): 1.0}
        for _ in range(e.exponent):
            out = _poly_mul(out, base)
        return out
    if isinstance(e, Negate):
        return {m: -c for m, c in to_poly(e.arg).items()}
    raise TypeError(f"not an expression: {e!r}")


def degree(e: Expr, vars: Iterable[VarId] | None = None) -> int:
    """Total degree, optionally counting only ``vars``.  The zero polynomial has degree 0."""
    keep = None if vars is None else set(vars)
    best = 0
    for mono in to_poly(e):
        d = sum(k for v, k in mono if keep is None or v in keep)
        best = max(best, d)
    return best


def from_poly(poly: Mapping[Monomial, float]) -> Expr:
    terms = []
    for mono in sorted(poly, key=lambda m: (sum(k for _, k in m), m)):
        coef = poly[mono]
        if coef == 0.0:
            continue
        factors: list[Expr] = []
        for var, k in mono:
            factors.append(Var(var) if k == 1 else Power(Var(var), k))
        if not factors:
            terms.append(Const(coef))
        elif coef == 1.0 and len(factors) == 1:
            terms.append(factors[0])
        elif coef == 1.0:
            terms.append(Product(tuple(factors)))
        else:
            terms.append(Product((Const(coef), *factors)))
    if not terms:
        return ZERO
    if len(terms) == 1:
        return terms[0]
    return Sum(tuple(terms))


def simplify(e: Expr) -> Expr:
    """Canonical form: expand, collect like monomials, sort by degree."""
    return from_poly(to_poly(e))


def is_constant(e: Expr) -> bool:
    return all(m == () for m in to_poly(e))


# ---------------------------------------------------------------------------
# convexity


class Convexity(enum.Enum):
    CONVEX_CERTIFIED = "convex-certified"
    NONCONVEX_WITNESS = "nonconvex-witness"
    UNKNOWN = "unknown"


@dataclass
class ConvexityVerdict:
    kind: Convexity
    witness: dict[VarId, float] | None = None
    min_eigenvalue: float | None = None
    exact: bool = False
    samples: int = 0

    @property
    def convex(self) -> bool:
        return self.kind is Convexity.CONVEX_CERTIFIED


EIG_TOL = 1e-10


def classify_convexity(
    e: Expr,
    vars: Sequence[VarId],
    domain_box: Mapping[VarId, tuple[float, float]] | None = None,
    samples: int = 256,
    fixed: Mapping[VarId, float] | None = None,
    seed: int = 0,
) -> ConvexityVerdict:
    """Decide convexity of ``e`` in ``vars`` over a box.

    Variables in ``fixed`` are substituted first.  If the Hessian in ``vars`` is
    then constant the verdict is exact (eigenvalue test).  Otherwise the Hessian
    is sampled over ``domain_box`` (which must cover every remaining variable):
    an indefinite sample is a witness, and all-PSD samples give ``UNKNOWN``.
    """
    if samples < 1:
        raise ExprError("samples must be >= 1")
    if fixed:
        e = substitute(e, fixed)
    vars = list(vars)
    if not vars:
        return ConvexityVerdict(Convexity.CONVEX_CERTIFIED, exact=True)
    H = hessian(e, vars)
    n = len(vars)
    if all(is_constant(h) for row in H for h in row):
        mat = np.array([[float(evaluate(h, {})) for h in row] for row in H])
        lam = float(np.linalg.eigvalsh(mat).min())
        scale = max(1.0, float(np.abs(mat).max()))
        if lam >= -EIG_TOL * scale:
            return ConvexityVerdict(Convexity.CONVEX_CERTIFIED, min_eigenvalue=lam, exact=True)
        witness = None
        if domain_box:
            witness = {v: 0.5 * (lo + hi) for v, (lo, hi) in domain_box.items()}
        return ConvexityVerdict(Convexity.NONCONVEX_WITNESS, witness=witness, min_eigenvalue=lam, exact=True)

    free = sorted(set().union(*(variables(h) for row in H for h in row)))
    if not domain_box:
        raise ExprError("a nonempty domain box is required for non-quadratic convexity checks")
    for v in free:
        if v not in domain_box:
            raise ExprError(f"domain box does not cover variable {v}")
        lo, hi = domain_box[v]
        if not lo <= hi:
            raise ExprError(f"empty box for variable {v}")
    rng = np.random.default_rng(seed)
    # box corners first (up to 2^k, capped), then uniform samples
    k = len(free)
    corner_count = min(2**k, samples)
    pts = {}
    for v_i, v in enumerate(free):
        lo, hi = domain_box[v]
        corners = np.array([(hi if (c >> v_i) & 1 else lo) for c in range(corner_count)], dtype=float)
        uniform = rng.uniform(lo, hi, size=samples)
        pts[v] = np.concatenate([corners, uniform])
    total = corner_count + samples
    mats = np.empty((total, n, n))
    for i in range(n):
        for j in range(n):
            mats[:, i, j] = np.broadcast_to(evaluate(H[i][j], pts), (total,))
    eigs = np.linalg.eigvalsh(mats)[:, 0]
    scale = np.maximum(1.0, np.abs(mats).reshape(total, -1).max(axis=1))
    worst = int(np.argmin(eigs / scale))
    if eigs[worst] < -EIG_TOL * scale[worst]:
        witness = {v: float(pts[v][worst]) for v in free}
        return ConvexityVerdict(
            Convexity.NONCONVEX_WITNESS, witness=witness, min_eigenvalue=float(eigs[worst]), samples=total
        )
    return ConvexityVerdict(Convexity.UNKNOWN, min_eigenvalue=float(eigs.min()), samples=total)
