"""Constraint-qualification checks for a follower's problem.

* Slater: a strictly feasible point of the follower's constraint set at x.
* CRCQ: rank constancy of every active-gradient subset near a point.  Sampling
  can refute CRCQ but never prove it, hence ``CONSISTENT`` rather than "holds".
* Svensson-style joint conditions: objective convexity, joint convexity of
  max_j g_j in (x, y^f), and a strictly feasible pair (x, y^f) somewhere.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import minimize

from .config import DEFAULT, RunConfig
from .expr import Convexity, VarId, classify_convexity, evaluate
from .follower import FollowerModel
from .linalg import grid_axis, numerical_rank
from .model import SlmfgProblem

STRICT = 1e-10
GRID_CAP = 200_000


# ---------------------------------------------------------------------------
# helpers


def _max_g(constraints, a: dict):
    vals = [np.asarray(evaluate(g, a), dtype=float) for g in constraints]
    return np.max(np.stack(np.broadcast_arrays(*vals)), axis=0)


def _box_grid(vars_, box, step):
    lo, hi = box
    n = len(vars_)
    while True:
        axis = grid_axis(lo, hi, step)
        if axis.size**n <= GRID_CAP:
            break
        step *= 1.5
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1), step


def _min_max(constraints, vars_, fixed: dict, box, step, starts: int = 4):
    """Global-ish min of max_j g_j over a box: grid scan plus epigraph SLSQP polish.

    Returns (point, value).
    """
    pts, _ = _box_grid(vars_, box, step)
    a = dict(fixed)
    a.update({v: pts[:, i] for i, v in enumerate(vars_)})
    G = np.broadcast_to(_max_g(constraints, a), (len(pts),))
    order = np.argsort(G, kind="stable")[:starts]
    grads = [[_diff(g, v) for v in vars_] for g in constraints]

    def cons_at(z):
        aa = dict(fixed)
        aa.update(zip(vars_, z))
        return aa

    def fun_g(z):
        aa = cons_at(z[:-1])
        return np.array([z[-1] - float(evaluate(g, aa)) for g in constraints])

    def jac_g(z):
        aa = cons_at(z[:-1])
        J = np.array([[float(evaluate(d, aa)) for d in row] for row in grads])
        return np.hstack([-J, np.ones((len(constraints), 1))])

    best_y, best = pts[order[0]].copy(), float(G[order[0]])
    n = len(vars_)
    for k in order:
        z0 = np.append(pts[k], G[k])
        res = minimize(
            lambda z: z[-1],
            z0,
            jac=lambda z: np.append(np.zeros(n), 1.0),
            bounds=[box] * n + [(None, None)],
            constraints=[{"type": "ineq", "fun": fun_g, "jac": jac_g}],
            method="SLSQP",
            options={"maxiter": 300, "ftol": 1e-15},
        )
        y = np.clip(res.x[:-1], *box)
        val = float(np.max([float(evaluate(g, cons_at(y))) for g in constraints]))
        if val < best:
            best_y, best = y, val
    return best_y, best


def _diff(g, v):
    from .expr import diff, simplify

    return simplify(diff(g, v))


# ---------------------------------------------------------------------------
# Slater


class SlaterVerdict(enum.Enum):
    HOLDS = "Holds"
    FAILS_CERTIFIED = "FailsCertified"
    UNKNOWN = "Unknown"


@dataclass
class SlaterReport:
    fid: str
    x: list[float]
    verdict: SlaterVerdict
    witness: list[float] | None
    max_constraint_value_at_witness: float
    reason: str = ""

    @property
    def holds(self) -> bool:
        return self.verdict is SlaterVerdict.HOLDS


def check_slater(p: SlmfgProblem, fid: str, x, box: tuple[float, float] | None = None,
                 samples: int | None = None, cfg: RunConfig | None = None) -> SlaterReport:
    """Search for a strictly feasible point of follower ``fid``'s set at ``x``.

    Failure is certified only for convex-certified constraints whose best
    min-max point lies strictly inside the search box (then it is a global
    minimizer of the convex function max_j g_j).
    """
    cfg = cfg or DEFAULT
    box = box or cfg.box
    x = [float(v) for v in np.ravel(x)]
    f = p.follower(fid)
    own = list(f.variables)
    if not f.constraints:
        return SlaterReport(fid, x, SlaterVerdict.HOLDS, [0.0] * f.dim, -np.inf, "no constraints")
    fixed = dict(zip(p.leader.variables, x))
    step = cfg.grid_step if samples is None else max((box[1] - box[0]) / max(samples, 2), 1e-6)
    y, val = _min_max(f.constraints, own, fixed, box, step)
    witness = [float(v) for v in y]
    if val < -STRICT:
        return SlaterReport(fid, x, SlaterVerdict.HOLDS, witness, val)
    convex = all(classify_convexity(g, own, fixed=fixed).kind is Convexity.CONVEX_CERTIFIED for g in f.constraints)
    if not convex:
        return SlaterReport(fid, x, SlaterVerdict.UNKNOWN, witness, val,
                            "constraints not convex-certified; no strictly feasible point found")
    margin = step
    inside = all(box[0] + margin < v < box[1] - margin for v in witness)
    if not inside:
        return SlaterReport(fid, x, SlaterVerdict.UNKNOWN, witness, val,
                            "min of max constraint sits on the search box boundary")
    reason = "feasible set empty" if val > STRICT else "feasible set has empty interior"
    return SlaterReport(fid, x, SlaterVerdict.FAILS_CERTIFIED, witness, val,
                        f"{reason}: interior minimum of the convex max constraint is {val:.3g}")


# ---------------------------------------------------------------------------
# CRCQ


class CrcqVerdict(enum.Enum):
    CONSISTENT = "ConsistentWithCRCQ"
    VIOLATION = "ViolationWitness"


@dataclass
class CrcqWitness:
    subset: tuple[int, ...]
    point1: list[float]
    point2: list[float]
    rank1: int
    rank2: int


@dataclass
class CrcqReport:
    fid: str
    point: list[float]  # (x, y^f)
    active: tuple[int, ...]
    ranks_at_point: dict[tuple[int, ...], int]
    sampled_ranks: dict[tuple[int, ...], list[int]]
    verdict: CrcqVerdict
    witness: CrcqWitness | None = None
    radius: float = 0.0
    samples: int = 0


def _active_gradients(m: FollowerModel, lvars, x, y, subset):
    base = dict(zip(lvars, x))
    J = m.jac(base, y)
    return J[list(subset), :]


def check_crcq(p: SlmfgProblem, fid: str, x, y, radius: float | None = None, samples: int | None = None,
               seed: int | None = None, cfg: RunConfig | None = None) -> CrcqReport:
    """``y`` is follower ``fid``'s own block."""
    from .multipliers import InfeasiblePoint

    cfg = cfg or DEFAULT
    radius = cfg.crcq_radius if radius is None else radius
    samples = cfg.crcq_samples if samples is None else samples
    seed = cfg.seed if seed is None else seed
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    f = p.follower(fid)
    m = FollowerModel(f)
    lvars = p.leader.variables
    g = m.cons(dict(zip(lvars, x)), y)
    if g.size and g.max() > cfg.activity_tol:
        raise InfeasiblePoint(f"follower {fid}: point violates constraint {int(g.argmax())} by {g.max():.3g}")
    active = tuple(int(j) for j in np.flatnonzero(np.abs(g) <= cfg.activity_tol))
    subsets = [s for r in range(1, len(active) + 1) for s in combinations(active, r)]
    here = np.concatenate([x, y])
    ranks0 = {s: numerical_rank(_active_gradients(m, lvars, x, y, s), cfg.rank_tol) for s in subsets}
    sampled: dict[tuple[int, ...], list[int]] = {s: [] for s in subsets}
    report = CrcqReport(fid, here.tolist(), active, ranks0, sampled, CrcqVerdict.CONSISTENT, radius=radius, samples=samples)
    if not subsets:
        return report
    rng = np.random.default_rng(seed)
    d = here.size
    k = x.size
    for _ in range(samples):
        u = rng.normal(size=d)
        u *= radius * rng.uniform() ** (1.0 / d) / np.linalg.norm(u)
        q = here + u
        for s in subsets:
            r = numerical_rank(_active_gradients(m, lvars, q[:k], q[k:], s), cfg.rank_tol)
            sampled[s].append(r)
            if r != ranks0[s] and report.witness is None:
                report.verdict = CrcqVerdict.VIOLATION
                report.witness = CrcqWitness(s, here.tolist(), q.tolist(), ranks0[s], r)
    return report


# ---------------------------------------------------------------------------
# Svensson-style joint conditions


class Cond(enum.Enum):
    HOLDS = "Holds"
    FAILS = "Fails"
    UNKNOWN = "Unknown"


@dataclass
class MidpointViolation:
    u: list[float]
    v: list[float]
    g_mid: float
    g_avg: float


@dataclass
class SvenssonFollower:
    fid: str
    objective_convex: Cond
    joint_convex: Cond
    strict_point: Cond
    midpoint_violation: MidpointViolation | None = None
    strict_witness: list[float] | None = None
    notes: list[str] = field(default_factory=list)


@dataclass
class SvenssonReport:
    followers: list[SvenssonFollower]

    def all_hold(self) -> bool:
        return all(
            c is Cond.HOLDS for f in self.followers for c in (f.objective_convex, f.joint_convex, f.strict_point)
        )


def objective_convexity(p: SlmfgProblem, fid: str, box, samples: int = 256, seed: int = 0) -> Cond:
    f = p.follower(fid)
    others = sorted(set(p.leader.variables) | set(p.follower_vars), key=lambda v: (v.block, v.index))
    dom = {v: tuple(box) for v in others}
    verdict = classify_convexity(f.objective, f.variables, domain_box=dom, samples=samples, seed=seed)
    return {Convexity.CONVEX_CERTIFIED: Cond.HOLDS, Convexity.NONCONVEX_WITNESS: Cond.FAILS}.get(verdict.kind, Cond.UNKNOWN)


def midpoint_test(constraints, vars_: list[VarId], box, samples: int, seed: int) -> MidpointViolation | None:
    """Secant test for max_j g_j: the first sampled pair whose midpoint value
    exceeds the chord average by more than 1e-10."""
    if not constraints:
        return None
    rng = np.random.default_rng(seed)
    n = len(vars_)
    U = rng.uniform(*box, size=(samples, n))
    V = rng.uniform(*box, size=(samples, n))
    # also pair box corners along each axis: cheap, often decisive
    M = 0.5 * (U + V)

    def val(P):
        return np.broadcast_to(_max_g(constraints, {v: P[:, i] for i, v in enumerate(vars_)}), (len(P),))

    gu, gv, gm = val(U), val(V), val(M)
    gap = gm - 0.5 * (gu + gv)
    i = int(np.argmax(gap))
    if gap[i] > STRICT:
        return MidpointViolation(U[i].tolist(), V[i].tolist(), float(gm[i]), float(0.5 * (gu[i] + gv[i])))
    return None


def check_svensson(p: SlmfgProblem, box: tuple[float, float] | None = None, samples: int = 256,
                   cfg: RunConfig | None = None) -> SvenssonReport:
    cfg = cfg or DEFAULT
    box = box or cfg.box
    out = []
    for f in p.followers:
        notes: list[str] = []
        a = objective_convexity(p, f.id, box, samples=samples, seed=cfg.seed)
        joint_vars = list(p.leader.variables) + list(f.variables)
        if not f.constraints:
            out.append(SvenssonFollower(f.id, a, Cond.HOLDS, Cond.HOLDS, notes=["no constraints: (b), (c) vacuous"]))
            continue
        viol = midpoint_test(f.constraints, joint_vars, box, samples, cfg.seed)
        if viol is not None:
            b = Cond.FAILS
        else:
            pieces = [classify_convexity(g, joint_vars, domain_box={v: box for v in joint_vars}, samples=samples, seed=cfg.seed)
                      for g in f.constraints]
            if all(v.kind is Convexity.CONVEX_CERTIFIED for v in pieces):
                b = Cond.HOLDS
                notes.append("every piece convex-certified; max of convex is convex")
            elif any(v.kind is Convexity.NONCONVEX_WITNESS for v in pieces):
                b = Cond.UNKNOWN
                notes.append("a piece is nonconvex but the max passed the midpoint test")
            else:
                b = Cond.UNKNOWN
        lbox = box
        w, val = _min_max(f.constraints, joint_vars, {}, lbox, max(cfg.grid_step, (lbox[1] - lbox[0]) / 40))
        if val < -STRICT:
            c = Cond.HOLDS
        else:
            c = Cond.UNKNOWN
            notes.append(f"no strictly feasible (x, y) found; best max constraint {val:.3g}")
        out.append(SvenssonFollower(f.id, a, b, c, viol, [float(t) for t in w] if c is Cond.HOLDS else None, notes))
    return SvenssonReport(out)
