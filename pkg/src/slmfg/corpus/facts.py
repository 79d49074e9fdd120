"""Expected facts for the built-in corpus, each bound to one checking operation."""

from __future__ import annotations

import math

import numpy as np

from ..expr import Convexity
from ..cq import Cond, CrcqVerdict, SlaterVerdict, check_crcq, check_slater, check_svensson
from ..gnep import check_reduction_equivalence, joint_convexity, reduce_grouped_to_nep
from ..mpcc import build_mpcc
from ..multipliers import EmptyPolytope, multiplier_polytope
from ..nep import Unbounded, best_response, solve_nep
from ..verify import (
    GateStatus,
    gate_t21,
    gate_t22,
    gate_t23,
    gate_t24,
    grid_global_mpcc,
    grid_global_slmfg,
    is_local_min_mpcc,
    is_local_min_slmfg,
    multiplier_sequence,
)
from ..report import fmt
from . import Fact

CLOSE = 1e-6


def _close(a, b, tol=CLOSE) -> bool:
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), atol=tol, rtol=0.0)


def _vertex_set(vs) -> list:
    return sorted(tuple(round(float(t), 9) + 0.0 for t in v) for v in vs)


def _nep_closed_form(xs, closed, tol=CLOSE):
    """Every equilibrium returned at each x matches the closed form."""

    def check(p, cfg):
        seen = []
        ok = True
        for x in xs:
            sol = solve_nep(p, [x], cfg)
            ys = [e.point for e in sol.equilibria]
            seen.append((x, ys))
            ok &= sol.found and all(_close(y, closed(x), tol) for y in ys)
        return ok, ";".join(f"x={fmt(x)}:{fmt(ys)}" for x, ys in seen)

    return check


def _local(kind, point, expect_better: bool, radius=None, step=None):
    def check(p, cfg):
        if kind == "mpcc":
            v = is_local_min_mpcc(build_mpcc(p), point, radius, step, cfg)
        else:
            v = is_local_min_slmfg(p, point, radius, step, cfg)
        obs = v.verdict.value + (f" better={fmt(v.better_point)} gap={fmt(v.objective_gap)}" if v.better else "")
        return v.better == expect_better, obs

    return check


def _gate(fn, point, status: GateStatus, failed: tuple = (), **kw):
    def check(p, cfg):
        r = fn(p, point, cfg=cfg, **kw)
        ok = r.status is status and all(f in r.failed for f in failed)
        return ok, r.label

    return check


# ---------------------------------------------------------------------------
# example 1: lens-shaped feasible sets, Slater fails at x = 0


def _ex1_y(x):
    r = -math.sqrt(x / 2)
    return [r, -x / 2, r, -x / 2]


def _ex1_multipliers(p, cfg):
    obs, ok = [], True
    for x in (0.5, 1.0, 2.0):
        y = [np.asarray(b) for b in np.reshape(_ex1_y(x), (2, 2))]
        lam = 1 / (4 * math.sqrt(x / 2))
        for f in p.followers:
            vs = multiplier_polytope(p, f.id, [x], y, cfg.activity_tol, cfg.rank_tol).vertices()
            ok &= len(vs) == 1 and _close(vs[0], [lam, lam])
            obs.append(f"x={fmt(x)}:{f.id}:{fmt(vs)}")
    return ok, ";".join(obs)


def _ex1_slater_flip(p, cfg):
    want = {-0.5: SlaterVerdict.FAILS_CERTIFIED, 0.0: SlaterVerdict.FAILS_CERTIFIED,
            0.25: SlaterVerdict.HOLDS, 1.0: SlaterVerdict.HOLDS}
    got = {x: check_slater(p, "f1", [x], cfg=cfg).verdict for x in want}
    return got == want, ";".join(f"x={fmt(x)}:{v.value}" for x, v in got.items())


def _ex1_slater_witness(p, cfg):
    r = check_slater(p, "f1", [1.0], cfg=cfg)
    return r.holds and r.max_constraint_value_at_witness < 0, f"{r.verdict.value} witness={fmt(r.witness)} max_g={fmt(r.max_constraint_value_at_witness)}"


def _ex1_empty_at_zero(p, cfg):
    y = [np.zeros(2), np.zeros(2)]
    try:
        poly = multiplier_polytope(p, "f1", [0.0], y, cfg.activity_tol, cfg.rank_tol)
    except EmptyPolytope as exc:
        return True, f"empty ({exc})"
    return poly.is_empty(), f"empty={poly.is_empty()} residual={fmt(poly.least_residual())}"


def ex1_facts() -> list[Fact]:
    return [
        Fact("nep-solution", "x in {0.5,1,2}", "y^f = (-sqrt(x/2), -x/2) for both followers", "derived",
             "nep.solve_nep", _nep_closed_form((0.5, 1.0, 2.0), _ex1_y)),
        Fact("multiplier-set", "x in {0.5,1,2}", "singleton lambda = 1/(4 sqrt(x/2)) * (1,1)", "derived",
             "multipliers.multiplier_polytope", _ex1_multipliers),
        Fact("slater", "x in {-0.5,0,0.25,1}", "FailsCertified for x <= 0, Holds for x > 0", "reported",
             "cq.check_slater", _ex1_slater_flip),
        Fact("slater-witness", "x=1", "strictly feasible witness with max g < 0", "derived",
             "cq.check_slater", _ex1_slater_witness),
        Fact("mpcc-infeasible", "x=0, y=0", "no multiplier satisfies stationarity", "reported",
             "multipliers.multiplier_polytope", _ex1_empty_at_zero),
        Fact("gate", "(0,0,0,0,0)", "T2.1 HypothesisFailed(Slater)", "reported",
             "verify.gate_t21", _gate(gate_t21, [0.0] * 5, GateStatus.HYPOTHESIS_FAILED, ("Slater",))),
    ]


# ---------------------------------------------------------------------------
# example 2: x * y^2 <= 0, convex in y but not jointly convex


def _ex2_unbounded(p, cfg):
    try:
        ys = best_response(p, "f1", [-1.0], [[0.0]], cfg)
    except Unbounded:
        return True, "Unbounded"
    return False, f"minimizers={fmt(ys)}"


def _ex2_global(p, cfg):
    g = grid_global_slmfg(p, cfg=cfg)
    return g.point is not None and _close(g.point, [1, 0, 0], cfg.grid_step), f"point={fmt(g.point)} value={fmt(g.value)}"


def _ex2_mpcc_global(p, cfg):
    g = grid_global_mpcc(build_mpcc(p), cfg=cfg)
    ok = g.point is not None and abs(g.point[0]) <= cfg.grid_step / 2
    return ok, f"point={fmt(g.point)} value={fmt(g.value)}"


def _ex2_svensson(p, cfg):
    r = check_svensson(p, cfg=cfg)
    ok = all(f.joint_convex is Cond.FAILS and f.midpoint_violation is not None
             and f.strict_point is Cond.HOLDS for f in r.followers)
    return ok, ";".join(f"{f.fid}:a={f.objective_convex.value},b={f.joint_convex.value},c={f.strict_point.value}"
                        for f in r.followers)


def ex2_facts() -> list[Fact]:
    return [
        Fact("unbounded", "x=-1", "follower f1 unbounded below", "derived", "nep.best_response", _ex2_unbounded),
        Fact("slmfg-global", "grid over [-3,3]", "global SLMFG solution (1,0,0)", "reported",
             "verify.grid_global_slmfg", _ex2_global),
        Fact("mpcc-global", "grid over [-3,3]", "best MPCC point has x = 0", "reported",
             "verify.grid_global_mpcc", _ex2_mpcc_global),
        Fact("local-slmfg", "(1,0,0)", "NoBetterNeighborFound", "reported", "verify.is_local_min_slmfg",
             _local("slmfg", [1.0, 0.0, 0.0], False, radius=0.2, step=0.02)),
        Fact("local-mpcc", "(0,0,0,1,1)", "NoBetterNeighborFound", "reported", "verify.is_local_min_mpcc",
             _local("mpcc", [0.0, 0.0, 0.0, 1.0, 1.0], False)),
        Fact("svensson", "box [-3,3]", "joint convexity fails with midpoint witness; strict point holds", "derived",
             "cq.check_svensson", _ex2_svensson),
        Fact("gate", "(0,0,0,1,1)", "T2.2 HypothesisFailed", "reported", "verify.gate_t22",
             _gate(gate_t22, [0.0, 0.0, 0.0, 1.0, 1.0], GateStatus.HYPOTHESIS_FAILED)),
    ]


# ---------------------------------------------------------------------------
# example 3: linear followers, spurious MPCC local solution


def _ex3_vertices(p, cfg):
    y = [np.ones(1), np.ones(1)]
    obs, ok = [], True
    for f in p.followers:
        vs = _vertex_set(multiplier_polytope(p, f.id, [0.0], y, cfg.activity_tol, cfg.rank_tol).vertices())
        ok &= vs == [(0.0, 1.0), (1.0, 0.0)]
        obs.append(f"{f.id}:{fmt(vs)}")
    return ok, ";".join(obs)


def _ex3_global(p, cfg):
    g = grid_global_slmfg(p, cfg=cfg)
    ok = g.point is not None and _close(g.point, [1 / 3, 2 / 3, 2 / 3], cfg.grid_step)
    return ok, f"point={fmt(g.point)} value={fmt(g.value)}"


def _ex3_crcq(p, cfg):
    r = check_crcq(p, "f1", [0.0], [1.0], cfg=cfg)
    return r.verdict is CrcqVerdict.CONSISTENT, r.verdict.value


def ex3_facts() -> list[Fact]:
    third = [1 / 3, 2 / 3, 2 / 3]
    return [
        Fact("nep-solution", "x in {-0.5,0,0.5}", "y^f = 1 - |x|", "derived", "nep.solve_nep",
             _nep_closed_form((-0.5, 0.0, 0.5), lambda x: [1 - abs(x)] * 2)),
        Fact("multiplier-set", "x=0, y=(1,1)", "vertices (1,0) and (0,1) per follower", "derived",
             "multipliers.enumerate_vertices", _ex3_vertices),
        Fact("local-mpcc", "(0,1,1,(0,1),(0,1))", "NoBetterNeighborFound", "reported", "verify.is_local_min_mpcc",
             _local("mpcc", [0, 1, 1, 0, 1, 0, 1], False)),
        Fact("local-mpcc", "(0,1,1,(1,0),(1,0))", "BetterNeighbor", "reported", "verify.is_local_min_mpcc",
             _local("mpcc", [0, 1, 1, 1, 0, 1, 0], True)),
        Fact("local-slmfg", "(0,1,1)", "BetterNeighbor", "reported", "verify.is_local_min_slmfg",
             _local("slmfg", [0.0, 1.0, 1.0], True)),
        Fact("local-slmfg", "(1/3,2/3,2/3)", "NoBetterNeighborFound", "reported", "verify.is_local_min_slmfg",
             _local("slmfg", third, False, radius=0.2, step=0.01)),
        Fact("slmfg-global", "grid over [-3,3]", "(1/3,2/3,2/3) within one grid step", "derived",
             "verify.grid_global_slmfg", _ex3_global),
        Fact("crcq", "x=0, y^f1=1", "ConsistentWithCRCQ", "derived", "cq.check_crcq", _ex3_crcq),
        Fact("gate", "(0,1,1)", "T2.3 HypothesisFailed (some multiplier is not MPCC-locally optimal)", "reported",
             "verify.gate_t23", _gate(gate_t23, [0.0, 1.0, 1.0], GateStatus.HYPOTHESIS_FAILED)),
        Fact("gate", "(1/3,2/3,2/3)", "T2.4 Transferred", "derived", "verify.gate_t24",
             _gate(gate_t24, third, GateStatus.TRANSFERRED)),
    ]


# ---------------------------------------------------------------------------
# example 4: intersecting disks, CRCQ fails at x = 0


def _ex4_polytope(p, cfg):
    y = [np.zeros(2), np.zeros(2)]
    poly = multiplier_polytope(p, "f1", [0.0], y, cfg.activity_tol, cfg.rank_tol)
    vs = _vertex_set(poly.vertices())
    ok = vs == [(0.0, 1.0), (1.0, 0.0)] and poly.rank() == 1 and _close(poly.b, [0, -2])
    return ok, f"A={fmt(poly.A)} b={fmt(poly.b)} rank={poly.rank()} vertices={fmt(vs)}"


def _ex4_crcq(p, cfg):
    r = check_crcq(p, "f1", [0.0], [0.0, 0.0], cfg=cfg)
    w = r.witness
    obs = r.verdict.value + (f" subset={fmt(w.subset)} ranks={w.rank1}->{w.rank2}" if w else "")
    return r.verdict is CrcqVerdict.VIOLATION and w is not None and {w.rank1, w.rank2} == {1, 2}, obs


def _ex4_sequence(p, cfg):
    ks = (10, 100, 1000, 10000)
    steps = multiplier_sequence(p, [1 / k for k in ks], cfg)
    last = steps[-1].multipliers[0]
    ok = len(last) == 1 and _close(last[0], [0.5, 0.5], 1e-4) and all(s.mpcc_residual <= cfg.feas_tol for s in steps)
    return ok, ";".join(f"k={k}:{fmt(s.multipliers[0])}" for k, s in zip(ks, steps))


def _ex4_slater(p, cfg):
    r = check_slater(p, "f1", [0.0], cfg=cfg)
    return r.holds, f"{r.verdict.value} witness={fmt(r.witness)}"


def ex4_facts() -> list[Fact]:
    return [
        Fact("multiplier-set", "x=0, y=0", "A=[[0,0],[-2,-2]], b=(0,-2), vertices (1,0),(0,1), rank 1", "derived",
             "multipliers.multiplier_polytope", _ex4_polytope),
        Fact("crcq", "x=0, y^f1=(0,0)", "ViolationWitness, rank 1 -> 2", "reported", "cq.check_crcq", _ex4_crcq),
        Fact("slater", "x=0", "Holds", "derived", "cq.check_slater", _ex4_slater),
        Fact("multiplier-sequence", "x=1/k, k=10..1e4", "unique multiplier -> (1/2,1/2)", "reported",
             "verify.multiplier_sequence", _ex4_sequence),
        Fact("local-slmfg", "(0,0,0,0,0)", "BetterNeighbor", "reported", "verify.is_local_min_slmfg",
             _local("slmfg", [0.0] * 5, True, radius=0.1, step=0.01)),
        Fact("gate", "(0,0,0,0,0)", "T2.4 HypothesisFailed(CRCQ)", "reported", "verify.gate_t24",
             _gate(gate_t24, [0.0] * 5, GateStatus.HYPOTHESIS_FAILED, ("CRCQ",), radius=0.1, step=0.01)),
    ]


# ---------------------------------------------------------------------------
# gnep1: grouped followers with shared budgets


def _gnep_reduce(g, cfg):
    r = reduce_grouped_to_nep(g)
    dims = [f.dim for f in r.followers]
    return [f.id for f in r.followers] == ["g1", "g2"] and dims == [2, 2], f"followers={[f.id for f in r.followers]} dims={dims}"


def _gnep_joint(g, cfg):
    kinds = [v.kind for grp in g.groups for v in joint_convexity(g, grp, cfg.box)]
    return all(k is Convexity.CONVEX_CERTIFIED for k in kinds), ",".join(k.value for k in kinds)


def _gnep_equiv(xs):
    def check(g, cfg):
        obs, ok = [], True
        for x in xs:
            r = check_reduction_equivalence(g, [x], step=0.1, box=(-1.0, 1.0), cfg=cfg)
            ok &= r.equivalent
            obs.append(f"x={fmt(x)}:{len(r.rgnep)}/{len(r.reduced)}")
        return ok, ";".join(obs)

    return check


def gnep1_facts() -> list[Fact]:
    return [
        Fact("joint-convexity", "leader box [-1,1]", "shared constraints convex-certified", "synthetic",
             "gnep.joint_convexity", _gnep_joint),
        Fact("reduction", "-", "two pseudo-followers g1, g2 of dimension 2", "synthetic",
             "gnep.reduce_grouped_to_nep", _gnep_reduce),
        Fact("reduction-equivalence", "x in {-0.5,0,0.5}", "RGNEP and reduced NEP grid solutions agree", "synthetic",
             "gnep.check_reduction_equivalence", _gnep_equiv((-0.5, 0.0, 0.5))),
    ]


FACTS = {"ex1": ex1_facts, "ex2": ex2_facts, "ex3": ex3_facts, "ex4": ex4_facts, "gnep1": gnep1_facts}
