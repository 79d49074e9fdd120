"""Grid-scan optimality oracles for SLMFG and MPCC points, and theorem gates.

Local minimality is never certified: a scan either exhibits a strictly better
feasible neighbor or reports ``NoBetterNeighborFound``.

Neighbors are generated per leader grid point x:

* SLMFG: the equilibria returned by ``solve_nep(x)``, plus gap-filtered grid
  profiles when the equilibrium set looks like a continuum.
* MPCC: the same candidates, plus the full follower grid whenever some
  follower is not convex-certified at x (KKT points need not be equilibria
  then).  For each candidate (x, y) the multiplier part is decided exactly by
  a bounded least-squares problem over the allowed multiplier box instead of
  gridding lambda.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.optimize import lsq_linear

from .config import DEFAULT, RunConfig
from .cq import Cond, SlaterVerdict, check_crcq, check_slater
from .expr import Convexity, classify_convexity, evaluate
from .follower import FollowerModel
from .linalg import grid_axis
from .model import SlmfgProblem
from .mpcc import MpccProblem, build_mpcc, kkt_residual
from .multipliers import EmptyPolytope, multiplier_polytope, sample_multipliers
from .nep import InfeasibleFollower, NepOracle, Unbounded, is_nash_equilibrium, solve_nep

IMPROVE = 1e-9
GRID_CAP = 250_000


class InfeasibleBasePoint(ValueError):
    pass


class NeighborVerdict(enum.Enum):
    NO_BETTER = "NoBetterNeighborFound"
    BETTER = "BetterNeighbor"


@dataclass
class LocalMinVerdict:
    point: list[float]
    radius: float
    verdict: NeighborVerdict
    better_point: list[float] | None = None
    objective_gap: float = 0.0
    feasible_neighbors_tested: int = 0
    step: float = 0.0

    @property
    def better(self) -> bool:
        return self.verdict is NeighborVerdict.BETTER


# ---------------------------------------------------------------------------
# shared scanning machinery


def leader_value(p: SlmfgProblem, x, ys) -> float:
    return float(evaluate(p.leader.objective, p.assignment(x, ys)))


def _flat(ys) -> np.ndarray:
    return np.concatenate([np.ravel(b) for b in ys]) if len(ys) else np.zeros(0)


def _blocks(p: SlmfgProblem, flat) -> list[np.ndarray]:
    out, k = [], 0
    for f in p.followers:
        out.append(np.asarray(flat[k : k + f.dim], dtype=float))
        k += f.dim
    return out


def _x_points(p: SlmfgProblem, lo, hi, step, center) -> list[np.ndarray]:
    axes = [grid_axis(l, h, step, c) for l, h, c in zip(lo, hi, center)]
    pts = [np.array(t) for t in product(*axes)]
    return [x for x in pts if p.leader.contains(x, 1e-12)]


def _y_grid(lo, hi, step, center) -> np.ndarray:
    n = len(lo)
    if n == 0:
        return np.zeros((1, 0))
    while True:
        axes = [grid_axis(l, h, step, c) for l, h, c in zip(lo, hi, center)]
        if np.prod([a.size for a in axes]) <= GRID_CAP:
            break
        step *= 1.5
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _vec(e, a, n) -> np.ndarray:
    return np.broadcast_to(np.asarray(evaluate(e, a), dtype=float), (n,))


def _grid_assignment(p: SlmfgProblem, x, Y) -> dict:
    a = dict(zip(p.leader.variables, map(float, x)))
    for i, v in enumerate(p.follower_vars):
        a[v] = Y[:, i]
    return a


def follower_convexity(p: SlmfgProblem, fid: str, x, box) -> Cond:
    """Convexity of follower ``fid``'s objective and constraints in its own
    variables at leader decision ``x`` (rivals range over ``box``)."""
    f = p.follower(fid)
    fixed = dict(zip(p.leader.variables, map(float, np.ravel(x))))
    dom = {v: tuple(box) for v in p.follower_vars}
    verdicts = [classify_convexity(e, f.variables, domain_box=dom, fixed=fixed) for e in (f.objective,) + f.constraints]
    if any(v.kind is Convexity.NONCONVEX_WITNESS for v in verdicts):
        return Cond.FAILS
    if all(v.kind is Convexity.CONVEX_CERTIFIED for v in verdicts):
        return Cond.HOLDS
    return Cond.UNKNOWN


class _Scanner:
    """Candidate generation shared by the local and global scans."""

    def __init__(self, p: SlmfgProblem, cfg: RunConfig, oracle: NepOracle | None = None):
        self.p = p
        self.cfg = cfg
        self.oracle = oracle or NepOracle(p, cfg)
        self.models = {f.id: FollowerModel(f) for f in p.followers}
        self._nep: dict = {}
        self._convex: dict = {}

    def nep(self, x):
        key = tuple(np.round(x, 14))
        if key not in self._nep:
            try:
                self._nep[key] = solve_nep(self.p, x, oracle=self.oracle)
            except (Unbounded, InfeasibleFollower):
                self._nep[key] = None
        return self._nep[key]

    def all_convex(self, x) -> bool:
        key = tuple(np.round(x, 14))
        if key not in self._convex:
            self._convex[key] = all(
                follower_convexity(self.p, f.id, x, self.cfg.box) is Cond.HOLDS for f in self.p.followers
            )
        return self._convex[key]

    def grid_equilibria(self, x, Y) -> np.ndarray:
        """Rows of Y whose best-response gaps are within tolerance."""
        if len(Y) == 0:
            return Y
        a = _grid_assignment(self.p, x, Y)
        keep = np.ones(len(Y), dtype=bool)
        for f in self.p.followers:
            m = self.models[f.id]
            for g in m.constraints:
                keep &= _vec(g, a, len(Y)) <= self.cfg.feas_tol
        for i, f in enumerate(self.p.followers):
            m = self.models[f.id]
            if m.separable:
                try:
                    br = self.oracle.best_response(f.id, x, [np.zeros(g.dim) for g in self.p.followers])
                except (Unbounded, InfeasibleFollower):
                    return Y[:0]
                own = dict(zip(self.p.leader.variables, map(float, x)))
                own.update(zip(m.own, br.minimizers[0]))
                best = float(evaluate(m.own_objective, own))
                keep &= _vec(m.own_objective, a, len(Y)) - best <= self.cfg.tol
            else:
                for r in np.flatnonzero(keep):
                    if self.oracle.gap(f.id, x, _blocks(self.p, Y[r])) > self.cfg.tol:
                        keep[r] = False
        return Y[keep]

    def slmfg_candidates(self, x, ylo, yhi, step, center, full_grid=False) -> np.ndarray:
        sol = self.nep(x)
        rows = []
        if sol is not None:
            rows = [np.asarray(e.point, dtype=float) for e in sol.equilibria]
        if sol is not None and (sol.continuum_suspected or full_grid):
            G = self.grid_equilibria(x, _y_grid(ylo, yhi, step, center))
            rows.extend(G)
        n = self.p.n_followers_total
        if not rows:
            return np.zeros((0, n))
        Y = np.array(rows, dtype=float).reshape(-1, n)
        inside = np.all((Y >= np.asarray(ylo) - 1e-12) & (Y <= np.asarray(yhi) + 1e-12), axis=1)
        return Y[inside]

    def mpcc_candidates(self, x, ylo, yhi, step, center, full_grid=False) -> np.ndarray:
        Y = self.slmfg_candidates(x, ylo, yhi, step, center)
        if full_grid or not self.all_convex(x) or (self.nep(x) is not None and self.nep(x).continuum_suspected):
            Y = np.vstack([Y, _y_grid(ylo, yhi, step, center)])
        return np.unique(Y, axis=0) if len(Y) else Y

    def kkt_multipliers(self, x, Y, lam_lo, lam_hi) -> list[tuple[int, np.ndarray]]:
        """Rows of Y admitting multipliers inside [lam_lo, lam_hi] that satisfy
        each follower's KKT system; returns (row, lambda) pairs."""
        cfg = self.cfg
        N = len(Y)
        if N == 0:
            return []
        a = _grid_assignment(self.p, x, Y)
        ok = np.ones(N, dtype=bool)
        lams = np.zeros((N, sum(f.p for f in self.p.followers)))
        off = 0
        for f in self.p.followers:
            m = self.models[f.id]
            lo, hi = lam_lo[off : off + f.p], lam_hi[off : off + f.p]
            g = np.stack([_vec(e, a, N) for e in m.constraints], axis=1) if f.p else np.zeros((N, 0))
            grad = np.stack([_vec(e, a, N) for e in m.grad_objective], axis=1)
            J = (
                np.stack([np.stack([_vec(e, a, N) for e in row], axis=1) for row in m.jacobian], axis=1)
                if f.p
                else np.zeros((N, 0, f.dim))
            )  # N x p x n_f
            ok &= np.all(g <= cfg.feas_tol, axis=1)
            active = np.abs(g) <= cfg.activity_tol
            # inactive multipliers are pinned at zero, so the box must allow it
            ok &= ~np.any(~active & (lo > 0)[None, :], axis=1)
            none_active = ~np.any(active, axis=1)
            ok &= ~none_active | (np.max(np.abs(grad), axis=1, initial=0.0) <= cfg.tol)
            for r in np.flatnonzero(ok & ~none_active):
                idx = np.flatnonzero(active[r])
                A = J[r][idx, :].T
                b = -grad[r]
                res = lsq_linear(A, b, bounds=(lo[idx], hi[idx]), method="bvls", tol=1e-14)
                if np.max(np.abs(A @ res.x - b), initial=0.0) > cfg.tol:
                    ok[r] = False
                    continue
                lams[r, off + idx] = res.x
            off += f.p
        return [(int(r), lams[r]) for r in np.flatnonzero(ok)]


def _slmfg_feasible(p, x, ys, cfg, oracle) -> bool:
    return p.leader.contains(x, cfg.feas_tol) and is_nash_equilibrium(p, x, ys, cfg.tol, oracle=oracle).ok


# ---------------------------------------------------------------------------
# local oracles


def is_local_min_slmfg(p: SlmfgProblem, point, radius: float | None = None, step: float | None = None,
                       cfg: RunConfig | None = None, oracle: NepOracle | None = None) -> LocalMinVerdict:
    cfg = cfg or DEFAULT
    radius = cfg.local_radius if radius is None else radius
    step = cfg.local_step if step is None else step
    scan = _Scanner(p, cfg, oracle)
    x0, ys0 = p.split(point)
    x0 = np.asarray(x0)
    if not _slmfg_feasible(p, x0, ys0, cfg, scan.oracle):
        raise InfeasibleBasePoint("base point is not SLMFG-feasible (leader box or follower equilibrium)")
    F0 = leader_value(p, x0, ys0)
    y0 = _flat(ys0)
    c0 = np.concatenate([x0, y0])
    tested = 0
    for x in _x_points(p, x0 - radius, x0 + radius, step, x0):
        if np.linalg.norm(x - x0) > radius + 1e-12:
            continue
        Y = scan.slmfg_candidates(x, y0 - radius, y0 + radius, step, y0)
        cands = sorted(Y.tolist())
        for yrow in cands:
            q = np.concatenate([x, yrow])
            if np.linalg.norm(q - c0) > radius + 1e-12:
                continue
            tested += 1
            ys = _blocks(p, np.asarray(yrow))
            val = leader_value(p, x, ys)
            if val < F0 - IMPROVE and _slmfg_feasible(p, x, ys, cfg, scan.oracle):
                return LocalMinVerdict(c0.tolist(), radius, NeighborVerdict.BETTER, q.tolist(), F0 - val, tested, step)
    return LocalMinVerdict(c0.tolist(), radius, NeighborVerdict.NO_BETTER, None, 0.0, tested, step)


def _mpcc_split(m: MpccProblem, point):
    x, ys, lams = m.split(point)
    return np.asarray(x), _flat(ys), _flat(lams) if lams else np.zeros(0)


def is_local_min_mpcc(m: MpccProblem, point, radius: float | None = None, step: float | None = None,
                      cfg: RunConfig | None = None, oracle: NepOracle | None = None) -> LocalMinVerdict:
    cfg = cfg or DEFAULT
    radius = cfg.local_radius if radius is None else radius
    step = cfg.local_step if step is None else step
    p = m.source
    if p is None:
        raise ValueError("MPCC has no source problem")
    point = np.asarray(point, dtype=float).ravel()
    x0, y0, l0 = _mpcc_split(m, point)
    if kkt_residual(m, point).total > cfg.tol or not p.leader.contains(x0, cfg.feas_tol):
        raise InfeasibleBasePoint("base point is not MPCC-feasible")
    scan = _Scanner(p, cfg, oracle)
    F0 = float(evaluate(m.objective, m.assignment(point)))
    c0 = np.concatenate([x0, y0])
    lam_lo = np.maximum(0.0, l0 - radius)
    lam_hi = l0 + radius
    tested = 0
    for x in _x_points(p, x0 - radius, x0 + radius, step, x0):
        if np.linalg.norm(x - x0) > radius + 1e-12:
            continue
        Y = scan.mpcc_candidates(x, y0 - radius, y0 + radius, step, y0)
        if len(Y) == 0:
            continue
        Y = np.array(sorted(Y.tolist())).reshape(-1, len(y0))
        d = np.linalg.norm(np.hstack([np.broadcast_to(x, (len(Y), len(x))), Y]) - c0, axis=1)
        Y = Y[d <= radius + 1e-12]
        for r, lam in scan.kkt_multipliers(x, Y, lam_lo, lam_hi):
            tested += 1
            q = np.concatenate([x, Y[r], lam])
            val = float(evaluate(m.objective, m.assignment(q)))
            if val < F0 - IMPROVE and kkt_residual(m, q).total <= cfg.tol:
                return LocalMinVerdict(point.tolist(), radius, NeighborVerdict.BETTER, q.tolist(), F0 - val, tested, step)
    return LocalMinVerdict(point.tolist(), radius, NeighborVerdict.NO_BETTER, None, 0.0, tested, step)


# ---------------------------------------------------------------------------
# global (boxed) scans


@dataclass
class GridOptimum:
    point: list[float] | None
    value: float
    points_tested: int
    feasible_points: list[list[float]] = field(default_factory=list)


def _global_x(p: SlmfgProblem, box, step):
    lo = np.full(p.leader.dim, box[0])
    hi = np.full(p.leader.dim, box[1])
    if p.leader.box is not None:
        lo = np.maximum(lo, [b[0] for b in p.leader.box])
        hi = np.minimum(hi, [b[1] for b in p.leader.box])
    return _x_points(p, lo, hi, step, np.zeros(p.leader.dim))


def grid_global_slmfg(p: SlmfgProblem, box=None, step=None, cfg: RunConfig | None = None,
                      oracle: NepOracle | None = None, full_grid: bool = False) -> GridOptimum:
    """Best SLMFG point over the leader grid with equilibria inside the y-box."""
    cfg = cfg or DEFAULT
    box = tuple(box or cfg.box)
    step = step or cfg.grid_step
    scan = _Scanner(p, cfg, oracle)
    n = p.n_followers_total
    ylo, yhi, yc = np.full(n, box[0]), np.full(n, box[1]), np.zeros(n)
    best, best_val, tested = None, np.inf, 0
    for x in _global_x(p, box, step):
        Y = scan.slmfg_candidates(x, ylo, yhi, step, yc, full_grid=full_grid)
        for yrow in sorted(Y.tolist()):
            tested += 1
            val = leader_value(p, x, _blocks(p, np.asarray(yrow)))
            if val < best_val - IMPROVE:
                best, best_val = np.concatenate([x, yrow]).tolist(), val
    return GridOptimum(best, best_val, tested)


def grid_global_mpcc(m: MpccProblem, box=None, step=None, cfg: RunConfig | None = None,
                     oracle: NepOracle | None = None, full_grid: bool = False, keep_points: bool = False) -> GridOptimum:
    """Best MPCC-feasible point over the (x, y) grid; multipliers are solved for."""
    cfg = cfg or DEFAULT
    box = tuple(box or cfg.box)
    step = step or cfg.grid_step
    p = m.source
    scan = _Scanner(p, cfg, oracle)
    n = p.n_followers_total
    ylo, yhi, yc = np.full(n, box[0]), np.full(n, box[1]), np.zeros(n)
    k = sum(f.p for f in p.followers)
    lam_lo, lam_hi = np.zeros(k), np.full(k, np.inf)
    best, best_val, tested, kept = None, np.inf, 0, []
    for x in _global_x(p, box, step):
        Y = scan.mpcc_candidates(x, ylo, yhi, step, yc, full_grid=full_grid)
        for r, lam in scan.kkt_multipliers(x, Y, lam_lo, lam_hi):
            q = np.concatenate([x, Y[r], lam])
            if kkt_residual(m, q).total > cfg.tol:
                continue
            tested += 1
            if keep_points:
                kept.append(q.tolist())
            val = float(evaluate(m.objective, m.assignment(q)))
            if val < best_val - IMPROVE:
                best, best_val = q.tolist(), val
    return GridOptimum(best, best_val, tested, kept)


# ---------------------------------------------------------------------------
# theorem gates


class GateStatus(enum.Enum):
    TRANSFERRED = "Transferred"
    HYPOTHESIS_FAILED = "HypothesisFailed"
    CONCLUSION_REFUTED = "ConclusionRefuted"


@dataclass
class Hypothesis:
    name: str
    status: Cond
    detail: str = ""


@dataclass
class TheoremGateReport:
    theorem: str
    hypotheses: list[Hypothesis]
    conclusion: bool | None
    conclusion_detail: str
    status: GateStatus
    failed: list[str] = field(default_factory=list)
    witness: list[float] | None = None
    multipliers_tested: list[list[float]] = field(default_factory=list)
    failing_multipliers: list[list[float]] = field(default_factory=list)
    coverage: str = ""

    @property
    def label(self) -> str:
        if self.status is GateStatus.HYPOTHESIS_FAILED:
            return f"HypothesisFailed({', '.join(self.failed)})"
        if self.status is GateStatus.CONCLUSION_REFUTED:
            return "ConclusionRefuted"
        return "Transferred"


def _finish(theorem, hyps, conclusion, detail, witness=None, **extra) -> TheoremGateReport:
    failed = [h.name for h in hyps if h.status is Cond.FAILS]
    unknown = [f"{h.name}?" for h in hyps if h.status is Cond.UNKNOWN]
    if failed or unknown:
        status = GateStatus.HYPOTHESIS_FAILED
    elif conclusion is False:
        status = GateStatus.CONCLUSION_REFUTED
    else:
        status = GateStatus.TRANSFERRED
    return TheoremGateReport(theorem, hyps, conclusion, detail, status, failed + unknown, witness, **extra)


def _combine(a: Cond, b: Cond) -> Cond:
    if Cond.FAILS in (a, b):
        return Cond.FAILS
    if Cond.UNKNOWN in (a, b):
        return Cond.UNKNOWN
    return Cond.HOLDS


def _convexity_hyp(p, x, cfg) -> Hypothesis:
    st, bad = Cond.HOLDS, []
    for f in p.followers:
        c = follower_convexity(p, f.id, x, cfg.box)
        st = _combine(st, c)
        if c is not Cond.HOLDS:
            bad.append(f"{f.id}:{c.value}")
    return Hypothesis("convexity", st, ", ".join(bad) or "objectives and constraints convex in own variables")


def _slater_hyp(p, x, cfg) -> Hypothesis:
    st, notes = Cond.HOLDS, []
    for f in p.followers:
        rep = check_slater(p, f.id, x, cfg=cfg)
        c = {SlaterVerdict.HOLDS: Cond.HOLDS, SlaterVerdict.FAILS_CERTIFIED: Cond.FAILS}.get(rep.verdict, Cond.UNKNOWN)
        st = _combine(st, c)
        if c is not Cond.HOLDS:
            notes.append(f"{f.id} at x={list(map(float, np.ravel(x)))}: {rep.verdict.value} ({rep.reason})")
    return Hypothesis("Slater", st, "; ".join(notes) or f"strictly feasible points found at x={list(map(float, np.ravel(x)))}")


def _polytopes(p: SlmfgProblem, x, ys, cfg):
    polys = []
    for f in p.followers:
        poly = multiplier_polytope(p, f.id, x, ys, cfg.activity_tol, cfg.rank_tol)
        if poly.is_empty():
            raise EmptyPolytope(f"multiplier set of follower {f.id} is empty: the MPCC has no point over ({list(map(float, x))}, y)")
        polys.append(poly)
    return polys


def _vertex_combos(polys, cap: int = 64):
    per = [poly.vertices() for poly in polys]
    combos = []
    for combo in product(*per):
        combos.append(np.concatenate(combo) if combo else np.zeros(0))
        if len(combos) >= cap:
            break
    return combos


def _mpcc_local_over(m, x, y, lams, radius, step, cfg, oracle):
    """Test MPCC local minimality for each multiplier; returns (tested, failing, witness)."""
    tested, failing, witness = [], [], None
    for lam in lams:
        q = np.concatenate([np.ravel(x), y, lam])
        v = is_local_min_mpcc(m, q, radius, step, cfg, oracle)
        tested.append(lam.tolist())
        if v.better:
            failing.append(lam.tolist())
            witness = witness or v.better_point
    return tested, failing, witness


def gate_t21(p: SlmfgProblem, point, radius=None, step=None, cfg: RunConfig | None = None) -> TheoremGateReport:
    """SLMFG local solution + convexity + Slater at x  =>  MPCC local solution for its multipliers."""
    cfg = cfg or DEFAULT
    oracle = NepOracle(p, cfg)
    x, ys = p.split(point)
    hyps = []
    try:
        v = is_local_min_slmfg(p, point, radius, step, cfg, oracle)
        hyps.append(Hypothesis("SLMFG local minimality", Cond.FAILS if v.better else Cond.HOLDS,
                               f"better neighbor {v.better_point}" if v.better else f"{v.feasible_neighbors_tested} neighbors tested"))
    except InfeasibleBasePoint as exc:
        hyps.append(Hypothesis("SLMFG local minimality", Cond.FAILS, str(exc)))
    hyps.append(_convexity_hyp(p, x, cfg))
    hyps.append(_slater_hyp(p, x, cfg))
    m = build_mpcc(p)
    try:
        polys = _polytopes(p, x, ys, cfg)
    except EmptyPolytope as exc:
        return _finish("T2.1", hyps, False, str(exc))
    tested, failing, witness = _mpcc_local_over(m, x, _flat(ys), _vertex_combos(polys), radius, step, cfg, oracle)
    ok = not failing
    detail = "MPCC local minimality holds at every vertex multiplier" if ok else "MPCC has a better neighbor"
    return _finish("T2.1", hyps, ok, detail, witness, multipliers_tested=tested, failing_multipliers=failing,
                   coverage=f"{len(tested)} vertex multiplier(s)")


def gate_t22(p: SlmfgProblem, point, box=None, step=None, cfg: RunConfig | None = None, m: MpccProblem | None = None) -> TheoremGateReport:
    """MPCC global solution + convexity and Slater at every leader decision  =>  SLMFG global solution.

    ``point`` is a full MPCC point (x, y, lambda).
    """
    cfg = cfg or DEFAULT
    box = tuple(box or cfg.box)
    step = step or cfg.grid_step
    m = m or build_mpcc(p)
    oracle = NepOracle(p, cfg)
    point = np.asarray(point, dtype=float).ravel()
    x0, y0, _ = _mpcc_split(m, point)
    hyps = []
    res = kkt_residual(m, point)
    if res.total > cfg.tol:
        hyps.append(Hypothesis("MPCC grid-global minimality", Cond.FAILS, f"point is not MPCC-feasible (residual {res.total:.3g})"))
    else:
        F0 = float(evaluate(m.objective, m.assignment(point)))
        opt = grid_global_mpcc(m, box, step, cfg, oracle)
        ok = opt.value >= F0 - IMPROVE
        hyps.append(Hypothesis("MPCC grid-global minimality", Cond.HOLDS if ok else Cond.FAILS,
                               f"grid best {opt.value:.6g} vs {F0:.6g}" + ("" if ok else f" at {opt.point}")))
    xs = _global_x(p, box, step)
    conv = Hypothesis("convexity", Cond.HOLDS, f"checked at {len(xs)} leader grid points")
    for x in xs:
        h = _convexity_hyp(p, x, cfg)
        if h.status is not Cond.HOLDS:
            conv = Hypothesis("convexity", h.status, f"at x={x.tolist()}: {h.detail}")
            if h.status is Cond.FAILS:
                break
    hyps.append(conv)
    sl = Hypothesis("Slater", Cond.HOLDS, f"checked at {len(xs)} leader grid points")
    for x in xs:
        h = _slater_hyp(p, x, cfg)
        if h.status is not Cond.HOLDS:
            sl = Hypothesis("Slater", h.status, h.detail)
            if h.status is Cond.FAILS:
                break
    hyps.append(sl)
    F0 = leader_value(p, x0, _blocks(p, y0))
    g = grid_global_slmfg(p, box, step, cfg, oracle)
    ok = g.value >= F0 - IMPROVE
    detail = f"SLMFG grid best {g.value:.6g} vs {F0:.6g}"
    return _finish("T2.2", hyps, ok, detail, None if ok else g.point, coverage=f"box {list(box)}, step {step}")


def gate_t23(p: SlmfgProblem, point, radius=None, step=None, n_samples: int | None = None,
             cfg: RunConfig | None = None) -> TheoremGateReport:
    """MPCC local solution for every multiplier + convexity + Slater  =>  SLMFG local solution.

    Every vertex plus ``n_samples`` sampled multipliers are tested.
    Raises EmptyPolytope when some follower has no multiplier.
    """
    cfg = cfg or DEFAULT
    n_samples = cfg.multiplier_samples if n_samples is None else n_samples
    oracle = NepOracle(p, cfg)
    x, ys = p.split(point)
    polys = _polytopes(p, x, ys, cfg)
    hyps = [_convexity_hyp(p, x, cfg), _slater_hyp(p, x, cfg)]
    lams = _vertex_combos(polys)
    samples = [sample_multipliers(poly, n_samples, seed=cfg.seed + i) for i, poly in enumerate(polys)]
    for j in range(n_samples):
        lams.append(np.concatenate([s[j] for s in samples]) if samples else np.zeros(0))
    m = build_mpcc(p)
    tested, failing, witness = _mpcc_local_over(m, x, _flat(ys), lams, radius, step, cfg, oracle)
    hyps.append(Hypothesis("MPCC local minimality for every multiplier", Cond.FAILS if failing else Cond.HOLDS,
                           f"fails for {failing}" if failing else f"{len(tested)} multipliers pass"))
    v = is_local_min_slmfg(p, point, radius, step, cfg, oracle)
    return _finish("T2.3", hyps, not v.better, f"SLMFG scan: {v.verdict.value}", v.better_point or witness,
                   multipliers_tested=tested, failing_multipliers=failing,
                   coverage=f"{len(lams) - n_samples} vertex combination(s) + {n_samples} sampled")


def gate_t24(p: SlmfgProblem, point, radius=None, step=None, cfg: RunConfig | None = None) -> TheoremGateReport:
    """MPCC local solution at vertex multipliers + convexity + Slater + CRCQ  =>  SLMFG local solution."""
    cfg = cfg or DEFAULT
    oracle = NepOracle(p, cfg)
    x, ys = p.split(point)
    polys = _polytopes(p, x, ys, cfg)
    hyps = [_convexity_hyp(p, x, cfg), _slater_hyp(p, x, cfg)]
    crcq, notes = Cond.HOLDS, []
    for f, y in zip(p.followers, ys):
        rep = check_crcq(p, f.id, x, y, cfg=cfg)
        if rep.witness is not None:
            crcq = Cond.FAILS
            w = rep.witness
            notes.append(f"{f.id}: subset {list(w.subset)} rank {w.rank1} at point, {w.rank2} at {w.point2}")
    hyps.append(Hypothesis("CRCQ", crcq, "; ".join(notes) or "ranks constant on sampled neighborhoods"))
    lams = _vertex_combos(polys)
    m = build_mpcc(p)
    tested, failing, witness = _mpcc_local_over(m, x, _flat(ys), lams, radius, step, cfg, oracle)
    hyps.append(Hypothesis("vertex MPCC local minimality", Cond.FAILS if failing else Cond.HOLDS,
                           f"fails for {failing}" if failing else f"{len(tested)} vertex multipliers pass"))
    v = is_local_min_slmfg(p, point, radius, step, cfg, oracle)
    return _finish("T2.4", hyps, not v.better, f"SLMFG scan: {v.verdict.value}", v.better_point or witness,
                   multipliers_tested=tested, failing_multipliers=failing, coverage=f"{len(lams)} vertex combination(s)")


GATES = {"t2.1": gate_t21, "t2.2": gate_t22, "t2.3": gate_t23, "t2.4": gate_t24}


# ---------------------------------------------------------------------------
# sequence probe


@dataclass
class SequenceStep:
    x: list[float]
    y: list[float]
    multipliers: list[list[list[float]]]  # per follower: vertex list
    mpcc_residual: float
    objective: float


def multiplier_sequence(p: SlmfgProblem, xs, cfg: RunConfig | None = None) -> list[SequenceStep]:
    """Follow equilibria and their multiplier sets along leader decisions ``xs``.

    For each x the first equilibrium of ``solve_nep`` is taken; the MPCC
    residual uses the first vertex of each follower's multiplier set.
    """
    cfg = cfg or DEFAULT
    m = build_mpcc(p)
    out = []
    for x in xs:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        sol = solve_nep(p, x, cfg)
        if not sol.found:
            raise ValueError(f"no equilibrium found at x={x.tolist()}")
        ys = [np.asarray(b) for b in sol.equilibria[0].y]
        verts = []
        for f in p.followers:
            poly = multiplier_polytope(p, f.id, x, ys, cfg.activity_tol, cfg.rank_tol)
            verts.append([v.tolist() for v in poly.vertices()])
        first = [np.asarray(v[0]) if v else np.full(f.p, np.nan) for v, f in zip(verts, p.followers)]
        q = np.concatenate([x, _flat(ys), _flat(first) if first else np.zeros(0)])
        resid = kkt_residual(m, q).total if all(v for v in verts) else np.inf
        out.append(SequenceStep(x.tolist(), _flat(ys).tolist(), verts, resid, leader_value(p, x, ys)))
    return out
