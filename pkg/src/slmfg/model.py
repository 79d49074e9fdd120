"""Problem containers and the on-disk problem format.

A problem file is a sequence of named sections::

    # comments run to end of line
    leader { dim 1; objective "x.0"; constraint "(neg x.0)"; box 0 4; }
    follower f1 { dim 2; objective "<expr>"; constraint "<expr>"; ... }
    group g1 { members f1 f2; shared_constraint "<expr>"; }

Leader variables are ``x.0 .. x.{dim-1}``; follower ``f`` owns ``y.f.0 ..``
unless an ``owns <var>*;`` statement lists its variables explicitly (used for
the pseudo-followers of a reduced grouped GNEP).
Every constraint expression ``g`` is read as ``g <= 0``.  ``box lo hi`` given
once applies to every leader coordinate; given ``dim`` times it is per
coordinate.  A file with at least one ``group`` section is a GNEP instance.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .expr import Expr, ExprError, VarId, block_vars, parse_expr, to_text, variables

LEADER_BLOCK = "x"


def follower_block(fid: str) -> str:
    return f"y.{fid}"


def leader_vars(dim: int) -> tuple[VarId, ...]:
    return block_vars(LEADER_BLOCK, dim)


class ProblemFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line, self.col = line, col
        if line is not None:
            message = f"line {line}, col {col}: {message}"
        super().__init__(message)


class ValidationError(ValueError):
    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class FollowerProblem:
    id: str
    dim: int
    objective: Expr
    constraints: tuple[Expr, ...] = ()
    variables: tuple[VarId, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if not self.variables:
            object.__setattr__(self, "variables", block_vars(follower_block(self.id), self.dim))
        object.__setattr__(self, "variables", tuple(self.variables))

    @property
    def p(self) -> int:
        return len(self.constraints)


@dataclass(frozen=True)
class LeaderSpec:
    dim: int
    objective: Expr
    constraints: tuple[Expr, ...] = ()
    box: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.box is not None:
            object.__setattr__(self, "box", tuple((float(lo), float(hi)) for lo, hi in self.box))

    @property
    def variables(self) -> tuple[VarId, ...]:
        return leader_vars(self.dim)

    def contains(self, x: Sequence[float], tol: float = 1e-9) -> bool:
        from .expr import evaluate

        if self.box is not None:
            for xi, (lo, hi) in zip(x, self.box):
                if xi < lo - tol or xi > hi + tol:
                    return False
        a = dict(zip(self.variables, map(float, x)))
        return all(evaluate(g, a) <= tol for g in self.constraints)


@dataclass(frozen=True)
class SlmfgProblem:
    leader: LeaderSpec
    followers: tuple[FollowerProblem, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "followers", tuple(self.followers))

    def follower(self, fid: str) -> FollowerProblem:
        for f in self.followers:
            if f.id == fid:
                return f
        raise KeyError(f"no follower {fid!r}")

    @property
    def follower_ids(self) -> tuple[str, ...]:
        return tuple(f.id for f in self.followers)

    @property
    def follower_vars(self) -> tuple[VarId, ...]:
        return tuple(v for f in self.followers for v in f.variables)

    @property
    def n_followers_total(self) -> int:
        return sum(f.dim for f in self.followers)

    def split(self, point: Sequence[float]) -> tuple[list[float], list[list[float]]]:
        """Split a flat (x, y^F) vector into the leader part and per-follower blocks."""
        point = [float(v) for v in point]
        need = self.leader.dim + self.n_followers_total
        if len(point) != need:
            raise ValueError(f"expected {need} coordinates (x, y), got {len(point)}")
        x = point[: self.leader.dim]
        ys, k = [], self.leader.dim
        for f in self.followers:
            ys.append(point[k : k + f.dim])
            k += f.dim
        return x, ys

    def assignment(self, x: Sequence[float], ys: Sequence[Sequence[float]]) -> dict[VarId, float]:
        a = dict(zip(self.leader.variables, map(float, x)))
        for f, y in zip(self.followers, ys):
            a.update(zip(f.variables, map(float, y)))
        return a


@dataclass(frozen=True)
class Group:
    name: str
    members: tuple[str, ...]
    shared: tuple[Expr, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "shared", tuple(self.shared))


@dataclass(frozen=True)
class GnepProblem:
    leader: LeaderSpec
    followers: tuple[FollowerProblem, ...]
    groups: tuple[Group, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "followers", tuple(self.followers))
        object.__setattr__(self, "groups", tuple(self.groups))

    def follower(self, fid: str) -> FollowerProblem:
        for f in self.followers:
            if f.id == fid:
                return f
        raise KeyError(f"no follower {fid!r}")

    def group_of(self, fid: str) -> Group:
        for g in self.groups:
            if fid in g.members:
                return g
        raise KeyError(f"follower {fid!r} belongs to no group")

    def group_vars(self, group: Group) -> tuple[VarId, ...]:
        return tuple(v for m in group.members for v in self.follower(m).variables)


# ---------------------------------------------------------------------------
# validation


def validate(p: SlmfgProblem | GnepProblem) -> list[str]:
    out: list[str] = []
    lv = set(p.leader.variables)
    if p.leader.dim < 1:
        out.append("leader dim must be >= 1")
    if p.leader.box is not None:
        if len(p.leader.box) != p.leader.dim:
            out.append("leader box must have one interval per leader coordinate")
        for lo, hi in p.leader.box:
            if not lo <= hi:
                out.append(f"leader box interval [{lo}, {hi}] is empty")
    for i, g in enumerate(p.leader.constraints):
        stray = variables(g) - lv
        if stray:
            out.append(f"leader constraint {i} references non-leader variables {_names(stray)}")

    ids = [f.id for f in p.followers]
    seen = set()
    for fid in ids:
        if fid in seen:
            out.append(f"duplicate follower id {fid!r}")
        seen.add(fid)
    owned: dict[VarId, str] = {}
    for f in p.followers:
        if f.dim < 1:
            out.append(f"follower {f.id}: dim must be >= 1")
        if len(f.variables) != f.dim:
            out.append(f"follower {f.id}: {len(f.variables)} variables for dim {f.dim}")
        for v in f.variables:
            if v in owned and owned[v] != f.id:
                out.append(f"variable {v} owned by both {owned[v]} and {f.id}")
            owned[v] = f.id
    all_follower_vars = set(owned)
    for f in p.followers:
        allowed = lv | set(f.variables)
        for j, g in enumerate(f.constraints):
            stray = variables(g) - allowed
            if stray:
                out.append(f"follower {f.id}: constraint {j} references {_names(stray)} outside (x, y^{f.id})")
        stray = variables(f.objective) - lv - all_follower_vars
        if stray:
            out.append(f"follower {f.id}: objective references unknown variables {_names(stray)}")
    stray = variables(p.leader.objective) - lv - all_follower_vars
    if stray:
        out.append(f"leader objective references unknown variables {_names(stray)}")

    if isinstance(p, GnepProblem):
        in_group: dict[str, str] = {}
        for g in p.groups:
            for m in g.members:
                if m not in seen:
                    out.append(f"group {g.name}: unknown member {m!r}")
                elif m in in_group:
                    out.append(f"follower {m} in both groups {in_group[m]} and {g.name}")
                else:
                    in_group[m] = g.name
        for fid in ids:
            if fid not in in_group:
                out.append(f"follower {fid} belongs to no group")
        for g in p.groups:
            members = [m for m in g.members if m in seen]
            gv = {v for m in members for v in p.follower(m).variables}
            for j, s in enumerate(g.shared):
                stray = variables(s) - lv - gv
                if stray:
                    out.append(f"group {g.name}: shared constraint {j} references out-of-group variables {_names(stray)}")
            for m in members:
                peers = {v for other in members if other != m for v in p.follower(other).variables}
                used = variables(p.follower(m).objective) & peers
                if used:
                    out.append(f"follower {m}: objective depends on same-group peer variables {_names(used)}")
    return out


def _names(vs: Iterable[VarId]) -> str:
    return ", ".join(str(v) for v in sorted(vs))


# ---------------------------------------------------------------------------
# text format

_TOKENS = re.compile(
    r"""(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>\#[^\n]*)|(?P<lbrace>\{)|(?P<rbrace>\})|(?P<semi>;)"""
    r"""|(?P<string>"[^"\n]*")|(?P<word>[^\s{};"#]+)"""
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    out, pos, line, line_start = [], 0, 1, 0
    while pos < len(text):
        m = _TOKENS.match(text, pos)
        if m is None:
            raise ProblemFormatError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line, line_start = line + 1, m.end()
        elif kind not in ("ws", "comment"):
            out.append(Token(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    return out


@dataclass
class Statement:
    keyword: Token
    args: list[Token]


@dataclass
class Section:
    kind: Token
    name: Token | None
    statements: list[Statement] = field(default_factory=list)


SECTION_KINDS = {"leader": False, "follower": True, "group": True, "mpcc": False}


def parse_sections(text: str) -> list[Section]:
    toks = tokenize(text)
    sections, i = [], 0

    def expect(kind):
        nonlocal i
        if i >= len(toks):
            last = toks[-1] if toks else Token("", "", 1, 1)
            raise ProblemFormatError(f"unexpected end of file, expected {kind}", last.line, last.col)
        t = toks[i]
        if t.kind != kind:
            raise ProblemFormatError(f"expected {kind}, found {t.text!r}", t.line, t.col)
        i += 1
        return t

    while i < len(toks):
        head = expect("word")
        if head.text not in SECTION_KINDS:
            raise ProblemFormatError(f"unknown section {head.text!r}", head.line, head.col)
        name = expect("word") if SECTION_KINDS[head.text] else None
        expect("lbrace")
        sec = Section(head, name)
        while i < len(toks) and toks[i].kind != "rbrace":
            kw = expect("word")
            args = []
            while i < len(toks) and toks[i].kind in ("word", "string"):
                args.append(toks[i])
                i += 1
            expect("semi")
            sec.statements.append(Statement(kw, args))
        expect("rbrace")
        sections.append(sec)
    return sections


def _arg_int(st: Statement) -> int:
    if len(st.args) != 1 or st.args[0].kind != "word":
        raise ProblemFormatError(f"'{st.keyword.text}' takes one integer", st.keyword.line, st.keyword.col)
    try:
        return int(st.args[0].text)
    except ValueError:
        t = st.args[0]
        raise ProblemFormatError(f"expected integer, found {t.text!r}", t.line, t.col) from None


def _arg_float(t: Token) -> float:
    try:
        return float(t.text)
    except ValueError:
        raise ProblemFormatError(f"expected number, found {t.text!r}", t.line, t.col) from None


def _arg_string(st: Statement) -> Token:
    if len(st.args) != 1 or st.args[0].kind != "string":
        raise ProblemFormatError(f"'{st.keyword.text}' takes one quoted expression", st.keyword.line, st.keyword.col)
    return st.args[0]


def parse_expression_token(t: Token, declared) -> Expr:
    try:
        return parse_expr(t.text[1:-1], declared)
    except ExprError as exc:
        raise ProblemFormatError(f"bad expression: {exc}", t.line, t.col) from None


def _owned(st: Statement) -> tuple[VarId, ...]:
    out = []
    for t in st.args:
        try:
            out.append(VarId.parse(t.text))
        except ExprError as exc:
            raise ProblemFormatError(str(exc), t.line, t.col) from None
    return tuple(out)


def _follower_variables(sections: list[Section]) -> dict[str, tuple[VarId, ...]]:
    out = {}
    for sec in sections:
        if sec.kind.text != "follower":
            continue
        dim, owns = None, None
        for st in sec.statements:
            if st.keyword.text == "dim":
                dim = _arg_int(st)
            elif st.keyword.text == "owns":
                owns = _owned(st)
        if owns is not None:
            out[sec.name.text] = owns
        elif dim is not None:
            out[sec.name.text] = block_vars(follower_block(sec.name.text), dim)
    return out


def declared_variables(sections: list[Section]) -> set[VarId]:
    leader_dim = None
    for sec in sections:
        if sec.kind.text == "leader":
            for st in sec.statements:
                if st.keyword.text == "dim":
                    leader_dim = _arg_int(st)
    declared = set(leader_vars(leader_dim or 0))
    for vs in _follower_variables(sections).values():
        declared.update(vs)
    return declared


def problem_from_sections(sections: list[Section], name: str = "") -> SlmfgProblem | GnepProblem:
    declared = declared_variables(sections)
    leader = None
    followers: list[FollowerProblem] = []
    groups: list[Group] = []
    for sec in sections:
        kind = sec.kind.text
        if kind == "mpcc":
            continue
        fields: dict = {"constraints": [], "box": [], "members": [], "shared": []}
        for st in sec.statements:
            kw = st.keyword.text
            if kw == "dim" and kind in ("leader", "follower"):
                fields["dim"] = _arg_int(st)
            elif kw == "objective" and kind in ("leader", "follower"):
                if "objective" in fields:
                    raise ProblemFormatError("duplicate objective", st.keyword.line, st.keyword.col)
                fields["objective"] = parse_expression_token(_arg_string(st), declared)
            elif kw == "constraint" and kind in ("leader", "follower"):
                fields["constraints"].append(parse_expression_token(_arg_string(st), declared))
            elif kw == "owns" and kind == "follower":
                fields["owns"] = _owned(st)
            elif kw == "box" and kind == "leader":
                if len(st.args) != 2:
                    raise ProblemFormatError("'box' takes lo hi", st.keyword.line, st.keyword.col)
                fields["box"].append((_arg_float(st.args[0]), _arg_float(st.args[1])))
            elif kw == "members" and kind == "group":
                if not st.args:
                    raise ProblemFormatError("'members' needs at least one id", st.keyword.line, st.keyword.col)
                fields["members"].extend(t.text for t in st.args)
            elif kw == "shared_constraint" and kind == "group":
                fields["shared"].append(parse_expression_token(_arg_string(st), declared))
            else:
                raise ProblemFormatError(f"unexpected '{kw}' in {kind} section", st.keyword.line, st.keyword.col)
        where = (sec.kind.line, sec.kind.col)
        if kind in ("leader", "follower"):
            for req in ("dim", "objective"):
                if req not in fields:
                    raise ProblemFormatError(f"{kind} section missing '{req}'", *where)
        if kind == "leader":
            if leader is not None:
                raise ProblemFormatError("duplicate leader section", *where)
            box = fields["box"] or None
            if box is not None and len(box) == 1 and fields["dim"] > 1:
                box = box * fields["dim"]
            leader = LeaderSpec(fields["dim"], fields["objective"], tuple(fields["constraints"]), box)
        elif kind == "follower":
            followers.append(
                FollowerProblem(
                    sec.name.text,
                    fields["dim"],
                    fields["objective"],
                    tuple(fields["constraints"]),
                    fields.get("owns", ()),
                )
            )
        elif kind == "group":
            groups.append(Group(sec.name.text, tuple(fields["members"]), tuple(fields["shared"])))
    if leader is None:
        raise ProblemFormatError("missing leader section", 1, 1)
    if not followers:
        raise ProblemFormatError("at least one follower section is required", 1, 1)
    if groups:
        problem = GnepProblem(leader, tuple(followers), tuple(groups), name)
    else:
        problem = SlmfgProblem(leader, tuple(followers), name)
    violations = validate(problem)
    if violations:
        raise ValidationError(violations)
    return problem


def loads(text: str, name: str = "") -> SlmfgProblem | GnepProblem:
    return problem_from_sections(parse_sections(text), name)


def load_problem(path: str | Path) -> SlmfgProblem | GnepProblem:
    path = Path(path)
    return loads(path.read_text(encoding="utf-8"), name=path.stem)


def _fmt_bound(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def dump_leader(leader: LeaderSpec) -> list[str]:
    lines = ["leader {", f"  dim {leader.dim};", f'  objective "{to_text(leader.objective)}";']
    lines += [f'  constraint "{to_text(g)}";' for g in leader.constraints]
    if leader.box is not None:
        lines += [f"  box {_fmt_bound(lo)} {_fmt_bound(hi)};" for lo, hi in leader.box]
    lines.append("}")
    return lines


def dumps(p: SlmfgProblem | GnepProblem) -> str:
    lines = dump_leader(p.leader)
    for f in p.followers:
        lines += ["", f"follower {f.id} {{", f"  dim {f.dim};"]
        if f.variables != block_vars(follower_block(f.id), f.dim):
            lines.append(f"  owns {' '.join(str(v) for v in f.variables)};")
        lines.append(f'  objective "{to_text(f.objective)}";')
        lines += [f'  constraint "{to_text(g)}";' for g in f.constraints]
        lines.append("}")
    if isinstance(p, GnepProblem):
        for g in p.groups:
            lines += ["", f"group {g.name} {{", f"  members {' '.join(g.members)};"]
            lines += [f'  shared_constraint "{to_text(s)}";' for s in g.shared]
            lines.append("}")
    return "\n".join(lines) + "\n"


def save_problem(p: SlmfgProblem | GnepProblem, path: str | Path) -> None:
    Path(path).write_text(dumps(p), encoding="utf-8")
