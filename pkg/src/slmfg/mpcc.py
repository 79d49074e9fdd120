"""KKT (MPCC) reformulation of a single-leader multi-follower game.

Each follower's Nash problem is replaced by its KKT system: stationarity
``grad_y F + sum_j lam_j grad_y g_j = 0``, feasibility ``g <= 0``, sign
``lam >= 0`` and the aggregate complementarity ``<lam, g> = 0``.
Multiplier variables are named ``lam.<follower>.<j>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .expr import Expr, Product, Sum, Var, VarId, block_vars, diff, evaluate, to_text
from .model import (
    LeaderSpec,
    ProblemFormatError,
    SlmfgProblem,
    _arg_int,
    _arg_string,
    declared_variables,
    dumps,
    parse_expression_token,
    parse_sections,
    problem_from_sections,
)


def multiplier_block(fid: str) -> str:
    return f"lam.{fid}"


@dataclass(frozen=True)
class MpccBlock:
    fid: str
    own: tuple[VarId, ...]
    multipliers: tuple[VarId, ...]
    stationarity: tuple[Expr, ...]
    constraints: tuple[Expr, ...]
    complementarity: Expr


@dataclass(frozen=True)
class MpccProblem:
    leader: LeaderSpec
    blocks: tuple[MpccBlock, ...]
    source: SlmfgProblem | None = None

    @property
    def objective(self) -> Expr:
        return self.leader.objective

    @property
    def variables(self) -> tuple[VarId, ...]:
        own = tuple(v for b in self.blocks for v in b.own)
        lam = tuple(v for b in self.blocks for v in b.multipliers)
        return self.leader.variables + own + lam

    @property
    def dim(self) -> int:
        return len(self.variables)

    def block(self, fid: str) -> MpccBlock:
        for b in self.blocks:
            if b.fid == fid:
                return b
        raise KeyError(fid)

    def split(self, point: Sequence[float]):
        """Flat (x, y^F, lam^F) -> (x, [y^f], [lam^f])."""
        point = np.asarray(point, dtype=float).ravel()
        if point.size != self.dim:
            raise ValueError(f"MPCC point needs {self.dim} coordinates (x, y, lam), got {point.size}")
        k = self.leader.dim
        x = point[:k]
        ys, lams = [], []
        for b in self.blocks:
            ys.append(point[k : k + len(b.own)])
            k += len(b.own)
        for b in self.blocks:
            lams.append(point[k : k + len(b.multipliers)])
            k += len(b.multipliers)
        return x, ys, lams

    def join(self, x, ys, lams) -> np.ndarray:
        parts = [np.ravel(x)] + [np.ravel(y) for y in ys] + [np.ravel(l) for l in lams]
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    def assignment(self, point) -> dict:
        return dict(zip(self.variables, map(float, np.ravel(point))))


def build_mpcc(p: SlmfgProblem) -> MpccProblem:
    blocks = []
    for f in p.followers:
        lam = block_vars(multiplier_block(f.id), f.p)
        stat = []
        for v in f.variables:
            terms = [diff(f.objective, v)]
            terms += [Product((Var(l), diff(g, v))) for l, g in zip(lam, f.constraints)]
            stat.append(Sum(tuple(terms)))
        comp = Sum(tuple(Product((Var(l), g)) for l, g in zip(lam, f.constraints)))
        blocks.append(MpccBlock(f.id, f.variables, lam, tuple(stat), f.constraints, comp))
    return MpccProblem(p.leader, tuple(blocks), p)


@dataclass
class KktResidual:
    stationarity_norm: float
    feasibility_violation: float
    sign_violation: float
    complementarity_gap: float

    @property
    def total(self) -> float:
        return max(self.stationarity_norm, self.feasibility_violation, self.sign_violation, self.complementarity_gap)


def kkt_residual(m: MpccProblem, point) -> KktResidual:
    a = m.assignment(point)
    x, ys, lams = m.split(point)
    stat = feas = sign = comp = 0.0
    for b, lam in zip(m.blocks, lams):
        for s in b.stationarity:
            stat = max(stat, abs(float(evaluate(s, a))))
        for g in b.constraints:
            feas = max(feas, float(evaluate(g, a)))
        if lam.size:
            sign = max(sign, float(np.max(-lam)))
        comp = max(comp, abs(float(evaluate(b.complementarity, a))))
    return KktResidual(stat, max(feas, 0.0), max(sign, 0.0), comp)


def is_mpcc_feasible(m: MpccProblem, point, tol: float = 1e-8) -> bool:
    x, _, _ = m.split(point)
    return kkt_residual(m, point).total <= tol and m.leader.contains(x, tol)


# ---------------------------------------------------------------------------
# file form


def dumps_mpcc(m: MpccProblem) -> str:
    from .expr import simplify

    if m.source is None:
        raise ValueError("MPCC has no source problem to embed")
    lines = [dumps(m.source).rstrip("\n"), "", "mpcc {", f'  objective "{to_text(m.objective)}";']
    for b in m.blocks:
        lines.append(f"  multipliers {b.fid} {len(b.multipliers)};")
        for s in b.stationarity:
            lines.append(f'  stationarity {b.fid} "{to_text(simplify(s))}";')
        for g in b.constraints:
            lines.append(f'  feasibility {b.fid} "{to_text(g)}";')
        lines.append(f'  complementarity {b.fid} "{to_text(simplify(b.complementarity))}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def loads_mpcc(text: str) -> MpccProblem:
    sections = parse_sections(text)
    problem = problem_from_sections(sections)
    if not isinstance(problem, SlmfgProblem):
        raise ProblemFormatError("an MPCC file must embed a plain SLMFG")
    msecs = [s for s in sections if s.kind.text == "mpcc"]
    if len(msecs) != 1:
        raise ProblemFormatError("expected exactly one mpcc section", 1, 1)
    sec = msecs[0]
    declared = declared_variables(sections)
    n_mult: dict[str, int] = {}
    for st in sec.statements:
        if st.keyword.text == "multipliers":
            if len(st.args) != 2:
                raise ProblemFormatError("'multipliers' takes a follower id and a count", st.keyword.line, st.keyword.col)
            fid = st.args[0].text
            n_mult[fid] = _arg_int(type(st)(st.keyword, st.args[1:]))
            declared.update(block_vars(multiplier_block(fid), n_mult[fid]))
    stat: dict[str, list] = {f.id: [] for f in problem.followers}
    feas: dict[str, list] = {f.id: [] for f in problem.followers}
    comp: dict[str, Expr] = {}
    objective = None
    for st in sec.statements:
        kw = st.keyword.text
        if kw == "multipliers":
            continue
        if kw == "objective":
            objective = parse_expression_token(_arg_string(st), declared)
            continue
        if kw not in ("stationarity", "feasibility", "complementarity") or len(st.args) != 2:
            raise ProblemFormatError(f"unexpected '{kw}' in mpcc section", st.keyword.line, st.keyword.col)
        fid = st.args[0].text
        if fid not in stat:
            raise ProblemFormatError(f"unknown follower {fid!r}", st.args[0].line, st.args[0].col)
        e = parse_expression_token(_arg_string(type(st)(st.keyword, st.args[1:])), declared)
        if kw == "stationarity":
            stat[fid].append(e)
        elif kw == "feasibility":
            feas[fid].append(e)
        else:
            comp[fid] = e
    leader = problem.leader if objective is None else LeaderSpec(
        problem.leader.dim, objective, problem.leader.constraints, problem.leader.box
    )
    blocks = []
    for f in problem.followers:
        k = n_mult.get(f.id, 0)
        if len(stat[f.id]) != f.dim:
            raise ProblemFormatError(f"follower {f.id}: {len(stat[f.id])} stationarity rows for dim {f.dim}", sec.kind.line, sec.kind.col)
        blocks.append(
            MpccBlock(f.id, f.variables, block_vars(multiplier_block(f.id), k), tuple(stat[f.id]),
                      tuple(feas[f.id]), comp.get(f.id, Sum(())))
        )
    return MpccProblem(leader, tuple(blocks), problem)


def load_mpcc(path: str | Path) -> MpccProblem:
    return loads_mpcc(Path(path).read_text(encoding="utf-8"))
