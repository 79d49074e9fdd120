"""Reductions of Rosen-type GNEPs with group-shared constraints.

Each group of followers becomes one pseudo-follower whose objective is the sum
of the members' objectives and whose constraints are the members' private
constraints plus the group's shared ones.  With a single group this is a plain
optimization problem in the followers' variables.

Both reductions require the shared constraints to be jointly convex in the
group's variables; uncertified instances are refused unless the caller
explicitly assumes joint convexity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT, RunConfig
from .cq import Cond
from .expr import Convexity, Expr, Sum, VarId, classify_convexity, variables
from .linalg import grid_axis
from .model import FollowerProblem, GnepProblem, Group, SlmfgProblem, ValidationError, validate
from .nep import discrete_nash


class ReductionError(ValueError):
    pass


class NotJointlyConvex(ReductionError):
    def __init__(self, group: str, constraint: int, verdict):
        self.group, self.constraint, self.verdict = group, constraint, verdict
        what = "is not jointly convex (witness found)" if verdict.kind is Convexity.NONCONVEX_WITNESS else "could not be certified jointly convex"
        super().__init__(
            f"group {group}: shared constraint {constraint} {what}; "
            "pass assume_jointly_convex=True to reduce anyway"
        )


def _leader_domain(g: GnepProblem, box) -> dict[VarId, tuple[float, float]]:
    if g.leader.box is not None:
        return {v: tuple(b) for v, b in zip(g.leader.variables, g.leader.box)}
    return {v: tuple(box) for v in g.leader.variables}


def joint_convexity(g: GnepProblem, group: Group, box=None, x=None, samples: int = 256, seed: int = 0):
    """Per shared constraint: convexity in the group's variables, for every
    leader decision in the leader box (or at ``x`` when given)."""
    box = box or DEFAULT.box
    gv = g.group_vars(group)
    fixed = None if x is None else dict(zip(g.leader.variables, map(float, np.ravel(x))))
    dom = _leader_domain(g, box)
    dom.update({v: tuple(box) for v in gv})
    return [classify_convexity(s, gv, domain_box=dom, samples=samples, fixed=fixed, seed=seed) for s in group.shared]


def _certify(g: GnepProblem, groups, box, x) -> None:
    for grp in groups:
        for j, v in enumerate(joint_convexity(g, grp, box, x)):
            if v.kind is not Convexity.CONVEX_CERTIFIED:
                raise NotJointlyConvex(grp.name, j, v)


def _pseudo_follower(g: GnepProblem, grp: Group) -> FollowerProblem:
    members = [g.follower(m) for m in grp.members]
    objective = Sum(tuple(f.objective for f in members)) if len(members) > 1 else members[0].objective
    constraints = tuple(c for f in members for c in f.constraints) + tuple(grp.shared)
    own = g.group_vars(grp)
    return FollowerProblem(grp.name, len(own), objective, constraints, own)


def reduce_grouped_to_nep(g: GnepProblem, assume_jointly_convex: bool = False, box=None) -> SlmfgProblem:
    """One pseudo-follower per group; the leader is carried over unchanged."""
    if not assume_jointly_convex:
        _certify(g, g.groups, box, None)
    followers = tuple(_pseudo_follower(g, grp) for grp in g.groups)
    out = SlmfgProblem(g.leader, followers, f"{g.name}-reduced" if g.name else "")
    problems = validate(out)
    if problems:
        raise ValidationError(problems)
    return out


@dataclass
class ReducedOpt:
    """min objective(x, y) s.t. constraints(x, y) <= 0 over ``variables``."""

    leader_variables: tuple[VarId, ...]
    variables: tuple[VarId, ...]
    objective: Expr
    constraints: tuple[Expr, ...]


def reduce_rosen_to_opt(g: GnepProblem, x=None, assume_jointly_convex: bool = False, box=None) -> ReducedOpt:
    """Single-group GNEP -> one optimization problem in all follower variables."""
    if len(g.groups) != 1:
        raise ReductionError(f"expected exactly one group, found {len(g.groups)}")
    grp = g.groups[0]
    lv = set(g.leader.variables)
    for m in grp.members:
        f = g.follower(m)
        stray = variables(f.objective) - lv - set(f.variables)
        if stray:
            raise ReductionError(f"follower {m}: objective depends on other followers ({', '.join(map(str, sorted(stray)))})")
    if not assume_jointly_convex:
        _certify(g, [grp], box, x)
    pf = _pseudo_follower(g, grp)
    return ReducedOpt(g.leader.variables, pf.variables, pf.objective, pf.constraints)


# ---------------------------------------------------------------------------
# grid equivalence check


@dataclass
class EquivalenceReport:
    x: list[float]
    step: float
    box: tuple[float, float]
    rgnep: list[list[float]]
    reduced: list[list[float]]
    only_in_rgnep: list[list[float]]
    only_in_reduced: list[list[float]]
    hypothesis: Cond
    notes: list[str] = field(default_factory=list)

    @property
    def equivalent(self) -> bool:
        return not self.only_in_rgnep and not self.only_in_reduced


def _decoupled(g: GnepProblem) -> bool:
    """True when no group's objectives or constraints touch another group's variables."""
    lv = set(g.leader.variables)
    for grp in g.groups:
        mine = set(g.group_vars(grp)) | lv
        exprs = [g.follower(m).objective for m in grp.members] + [c for m in grp.members for c in g.follower(m).constraints]
        exprs += list(grp.shared)
        if any(variables(e) - mine for e in exprs):
            return False
    return True


def _grid_solutions(players_by_group, order, base, axis, decoupled: bool, max_points: int):
    """Grid Nash profiles; per-group products when groups are decoupled."""
    if decoupled:
        profile = [np.zeros(0)]
        for vars_, players in players_by_group:
            mask = discrete_nash(players, base, {v: axis for v in vars_})
            pts = [axis[idx] for idx in np.argwhere(mask)]
            profile = [np.concatenate([p, q]) for p in profile for q in pts]
        return profile
    if axis.size ** len(order) > max_points:
        raise ReductionError("joint grid too large for the equivalence check; coarsen the grid")
    players = [pl for _, group_players in players_by_group for pl in group_players]
    mask = discrete_nash(players, base, {v: axis for v in order})
    return [axis[idx] for idx in np.argwhere(mask)]


def _unmatched(A, B, step) -> list[list[float]]:
    if not A:
        return []
    if not B:
        return [a.tolist() for a in A]
    Bm = np.array(B)
    return [a.tolist() for a in A if np.min(np.max(np.abs(Bm - a), axis=1)) > step * (1 + 1e-9)]


def check_reduction_equivalence(g: GnepProblem, x, step: float | None = None, box=None,
                                cfg: RunConfig | None = None, max_points: int = 5_000_000) -> EquivalenceReport:
    """Compare grid RGNEP solutions with grid solutions of the reduced NEP.

    RGNEP side: each follower's block is a conditional grid argmin subject to
    its private constraints and its group's shared constraints evaluated at
    the full profile.  Reduced side: each group's block is a grid argmin of
    the summed objective.  Sets are compared up to one grid step (inf-norm).
    """
    cfg = cfg or DEFAULT
    step = step or cfg.grid_step
    box = tuple(box or cfg.box)
    x = [float(v) for v in np.ravel(x)]
    base = dict(zip(g.leader.variables, x))
    axis = grid_axis(box[0], box[1], step)
    notes = []
    try:
        _certify(g, g.groups, box, x)
        hyp = Cond.HOLDS
    except NotJointlyConvex as exc:
        hyp = Cond.FAILS if exc.verdict.kind is Convexity.NONCONVEX_WITNESS else Cond.UNKNOWN
        notes.append(f"hypothesis violated: {exc}")
    order = [v for grp in g.groups for v in g.group_vars(grp)]
    dec = _decoupled(g)
    rg_players, red_players = [], []
    for grp in g.groups:
        per = []
        for mname in grp.members:
            f = g.follower(mname)
            per.append((f.variables, f.objective, tuple(f.constraints) + tuple(grp.shared)))
        rg_players.append((g.group_vars(grp), per))
        pf = _pseudo_follower(g, grp)
        red_players.append((pf.variables, [(pf.variables, pf.objective, pf.constraints)]))
    rg = _grid_solutions(rg_players, order, base, axis, dec, max_points)
    red = _grid_solutions(red_players, order, base, axis, dec, max_points)
    return EquivalenceReport(
        x, step, box,
        [r.tolist() for r in rg], [r.tolist() for r in red],
        _unmatched(rg, red, step), _unmatched(red, rg, step), hyp, notes,
    )
