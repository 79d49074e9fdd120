"""The followers' x-parametrized Nash equilibrium problem.

Best responses combine a grid scan with multistart SLSQP solves; every solver
iterate is pulled back to exact feasibility before it is compared, so a
best-response gap never benefits from constraint slack.  ``brute_force_nep``
is an independent pure-grid oracle.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT, RunConfig
from .expr import Negate, classify_convexity, evaluate
from .follower import FollowerModel, cluster
from .linalg import grid_axis
from .model import SlmfgProblem


class NepError(RuntimeError):
    pass


class InfeasibleFollower(NepError):
    def __init__(self, fid: str, x, min_violation: float):
        self.fid, self.x, self.min_violation = fid, list(x), min_violation
        super().__init__(f"follower {fid} has no feasible point at x={list(x)} (min max-constraint {min_violation:.3g})")


class Unbounded(NepError):
    """Heuristic: the minimizer sits on the search-box wall with no active constraint
    and the objective keeps falling on a box twice as large."""

    def __init__(self, fid: str, x, drop: float):
        self.fid, self.x, self.drop = fid, list(x), drop
        super().__init__(f"follower {fid} appears unbounded below at x={list(x)} (heuristic; drop {drop:.3g} on doubled box)")


@dataclass
class BestResponse:
    fid: str
    value: float
    minimizers: list[np.ndarray]


class Status(enum.Enum):
    EQUILIBRIUM = "equilibrium"
    NOT_EQUILIBRIUM = "not-equilibrium"
    INFEASIBLE = "infeasible"


@dataclass
class EquilibriumCertificate:
    x: list[float]
    y: list[list[float]]
    gaps: dict[str, float]
    kkt_residual: float
    kkt_by_follower: dict[str, float] = field(default_factory=dict)

    @property
    def point(self) -> list[float]:
        return [v for block in self.y for v in block]

    @property
    def max_gap(self) -> float:
        return max(self.gaps.values(), default=0.0)


@dataclass
class NashVerdict:
    status: Status
    certificate: EquilibriumCertificate
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status is Status.EQUILIBRIUM


@dataclass
class NepSolution:
    x: list[float]
    equilibria: list[EquilibriumCertificate]
    continuum_suspected: bool = False

    @property
    def found(self) -> bool:
        return bool(self.equilibria)

    @property
    def status(self) -> str:
        return "found" if self.found else "NoEquilibriumFound"


def _key(values) -> tuple:
    return tuple(float(v) for v in np.ravel(values))


class NepOracle:
    """Caches best responses for one problem and config.

    Best responses of own-separable followers do not depend on rivals, so they
    are cached per leader decision only.
    """

    def __init__(self, problem: SlmfgProblem, cfg: RunConfig = DEFAULT):
        self.problem = problem
        self.cfg = cfg
        self.models = {f.id: FollowerModel(f) for f in problem.followers}
        self._br: dict = {}
        self._slater: dict = {}

    def base(self, fid: str, x, ys) -> dict:
        p = self.problem
        a = dict(zip(p.leader.variables, map(float, x)))
        for f, y in zip(p.followers, ys):
            if f.id != fid:
                a.update(zip(f.variables, map(float, y)))
        return a

    def _cache_key(self, fid, x, ys):
        m = self.models[fid]
        if m.separable:
            return (fid, _key(x))
        rivals = [y for f, y in zip(self.problem.followers, ys) if f.id != fid]
        return (fid, _key(x), _key(np.concatenate([np.ravel(r) for r in rivals]) if rivals else []))

    def best_response(self, fid: str, x, ys, warm=None) -> BestResponse:
        key = self._cache_key(fid, x, ys)
        if key not in self._br:
            self._br[key] = self._best_response(fid, x, ys, warm)
        br = self._br[key]
        m = self.models[fid]
        if m.separable:
            # rival-only terms are additive: re-evaluate at the current rivals
            return BestResponse(fid, m.value(self.base(fid, x, ys), br.minimizers[0]), br.minimizers)
        return br

    def _best_response(self, fid, x, ys, warm) -> BestResponse:
        cfg = self.cfg
        m = self.models[fid]
        base = self.base(fid, x, ys)
        box = cfg.box
        pts, F, G = m.grid(base, box, cfg.grid_step)
        feas = G <= 0.0
        anchor = None
        if feas.any():
            order = np.flatnonzero(feas)[np.argsort(F[feas], kind="stable")]
            anchor_pts = pts[order]
        else:
            y0 = pts[np.argmin(G)]
            y, val = m.min_max_constraint(base, y0, box)
            if val > cfg.feas_tol:
                raise InfeasibleFollower(fid, x, val)
            anchor_pts = np.array([y])
        anchor = anchor_pts[0] if m.max_cons(base, anchor_pts[0]) <= 0.0 else None

        starts = list(anchor_pts[:4])
        if len(anchor_pts) > 4:
            rng = np.random.default_rng(cfg.seed)
            starts += list(anchor_pts[rng.choice(len(anchor_pts), size=min(2, len(anchor_pts)), replace=False)])
        if warm is not None:
            starts.append(np.asarray(warm, dtype=float))

        candidates = [np.asarray(p, dtype=float) for p in anchor_pts[:64]]
        for s in starts:
            y = m.local_min(base, s, box)
            s_anchor = s if m.max_cons(base, s) <= 0.0 else anchor
            candidates.append(m.repair(base, y, s_anchor))
        # candidates must be exactly feasible unless none is
        exact = [c for c in candidates if m.max_cons(base, c) <= 0.0]
        pool = exact or [c for c in candidates if m.max_cons(base, c) <= cfg.feas_tol]
        if not pool:
            raise InfeasibleFollower(fid, x, min(m.max_cons(base, c) for c in candidates))
        vals = np.array([m.value(base, c) for c in pool])
        best = float(vals.min())
        thr = best + 1e-8 * (1.0 + abs(best))
        minimizers = cluster([c for c, v in zip(pool, vals) if v <= thr], cfg.cluster_eps)

        self._check_unbounded(m, fid, x, base, minimizers, best)
        return BestResponse(fid, best, minimizers)

    def _check_unbounded(self, m: FollowerModel, fid, x, base, minimizers, best):
        cfg = self.cfg
        lo, hi = cfg.box
        edge = cfg.grid_step
        for y in minimizers:
            on_wall = np.any((y <= lo + edge) | (y >= hi - edge))
            inactive = m.max_cons(base, y) < -cfg.activity_tol
            if on_wall and inactive:
                pts, F, G = m.grid(base, (2 * lo, 2 * hi), 2 * cfg.grid_step)
                feas = G <= 0.0
                if feas.any():
                    drop = best - float(F[feas].min())
                    if drop > cfg.unbounded_margin:
                        raise Unbounded(fid, x, drop)
                return

    def value(self, fid, x, ys) -> float:
        m = self.models[fid]
        idx = self.problem.follower_ids.index(fid)
        return m.value(self.base(fid, x, ys), ys[idx])

    def gap(self, fid, x, ys) -> float:
        try:
            br = self.best_response(fid, x, ys)
        except Unbounded:
            return np.inf
        return max(0.0, self.value(fid, x, ys) - br.value)

    def slater_holds(self, fid, x) -> bool:
        key = (fid, _key(x))
        if key not in self._slater:
            from .cq import SlaterVerdict, check_slater

            rep = check_slater(self.problem, fid, x, cfg=self.cfg)
            self._slater[key] = rep.verdict is SlaterVerdict.HOLDS
        return self._slater[key]


def _oracle(problem, cfg, oracle) -> NepOracle:
    if oracle is not None:
        return oracle
    return NepOracle(problem, cfg or DEFAULT)


def _blocks(problem: SlmfgProblem, y) -> list[np.ndarray]:
    if len(y) == len(problem.followers) and all(np.ndim(b) == 1 for b in y):
        return [np.asarray(b, dtype=float) for b in y]
    flat = np.asarray(y, dtype=float).ravel()
    if flat.size != problem.n_followers_total:
        raise ValueError(f"expected {problem.n_followers_total} follower coordinates, got {flat.size}")
    out, k = [], 0
    for f in problem.followers:
        out.append(flat[k : k + f.dim])
        k += f.dim
    return out


def best_response(problem: SlmfgProblem, fid: str, x, y_minus=None, cfg: RunConfig | None = None, oracle=None):
    """Minimizers of follower ``fid``'s objective over its feasible set at ``x``.

    ``y_minus`` holds the rivals' blocks in follower order (the follower's own
    block omitted); it may be omitted for own-separable followers.
    """
    o = _oracle(problem, cfg, oracle)
    ys = []
    rivals = list(y_minus) if y_minus is not None else None
    for f in problem.followers:
        if f.id == fid:
            ys.append(np.zeros(f.dim))
        elif rivals is None:
            ys.append(np.zeros(f.dim))
        else:
            ys.append(np.asarray(rivals.pop(0), dtype=float))
    return o.best_response(fid, x, ys).minimizers


def kkt_residual_for(o: NepOracle, fid: str, x, ys) -> float:
    from .multipliers import polytope_from_model

    m = o.models[fid]
    idx = o.problem.follower_ids.index(fid)
    poly = polytope_from_model(m, o.base(fid, x, ys), ys[idx], o.cfg.activity_tol, fid=fid, check_feasible=False)
    return poly.least_residual()


def is_nash_equilibrium(problem: SlmfgProblem, x, y, tol: float | None = None, cfg: RunConfig | None = None, oracle=None) -> NashVerdict:
    o = _oracle(problem, cfg, oracle)
    tol = o.cfg.tol if tol is None else tol
    ys = _blocks(problem, y)
    x = [float(v) for v in np.ravel(x)]
    gaps, kkts = {}, {}
    for f, yf in zip(problem.followers, ys):
        viol = o.models[f.id].max_cons(o.base(f.id, x, ys), yf)
        if viol > max(o.cfg.feas_tol, tol * 1e-2):
            cert = EquilibriumCertificate(x, [list(map(float, b)) for b in ys], gaps, np.inf, kkts)
            return NashVerdict(Status.INFEASIBLE, cert, f"follower {f.id} violates its constraints by {viol:.3g}")
    detail = ""
    status = Status.EQUILIBRIUM
    for f in problem.followers:
        gaps[f.id] = float(o.gap(f.id, x, ys))
        kkts[f.id] = float(kkt_residual_for(o, f.id, x, ys))
        if gaps[f.id] > tol:
            status = Status.NOT_EQUILIBRIUM
            detail = f"follower {f.id} can improve by {gaps[f.id]:.3g}"
        elif kkts[f.id] > tol and o.slater_holds(f.id, x):
            status = Status.NOT_EQUILIBRIUM
            detail = f"follower {f.id}: KKT residual {kkts[f.id]:.3g} although Slater holds"
    cert = EquilibriumCertificate(x, [list(map(float, b)) for b in ys], gaps, max(kkts.values(), default=0.0), kkts)
    return NashVerdict(status, cert, detail)


def solve_nep(problem: SlmfgProblem, x, cfg: RunConfig | None = None, oracle=None) -> NepSolution:
    """Synchronous best-response iteration from multistart profiles.

    A follower keeps its current block whenever it is already a best response
    (within tolerance), so continua of equilibria survive as distinct
    representatives.
    """
    o = _oracle(problem, cfg, oracle)
    cfg = o.cfg
    x = [float(v) for v in np.ravel(x)]
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.box
    starts = [[None] * len(problem.followers)]
    for _ in range(max(cfg.n_starts - 1, 0)):
        starts.append([rng.uniform(lo, hi, size=f.dim) for f in problem.followers])

    finals = []
    for start in starts:
        ys = [np.zeros(f.dim) if s is None else s for f, s in zip(problem.followers, start)]
        fresh = [s is None for s in start]
        for _ in range(cfg.max_iter):
            new = []
            for i, f in enumerate(problem.followers):
                br = o.best_response(f.id, x, ys)
                m = o.models[f.id]
                base = o.base(f.id, x, ys)
                cur = ys[i]
                if not fresh[i] and m.max_cons(base, cur) <= cfg.feas_tol and m.value(base, cur) <= br.value + 0.1 * cfg.tol:
                    new.append(cur)
                else:
                    dists = [np.max(np.abs(z - cur)) for z in br.minimizers]
                    new.append(np.array(br.minimizers[int(np.argmin(dists))]))
            fresh = [False] * len(fresh)
            moved = any(np.max(np.abs(a - b)) > 0 for a, b in zip(new, ys)) if ys else False
            ys = new
            if not moved:
                break
        finals.append(ys)

    certified = []
    for ys in finals:
        verdict = is_nash_equilibrium(problem, x, ys, cfg.tol, oracle=o)
        if verdict.ok:
            certified.append(np.concatenate(ys) if ys else np.zeros(0))
    reps = cluster(certified, cfg.cluster_eps)
    eqs = []
    for flat in reps:
        ys = _blocks(problem, flat)
        eqs.append(is_nash_equilibrium(problem, x, ys, cfg.tol, oracle=o).certificate)
    return NepSolution(x, eqs, continuum_suspected=len(eqs) >= cfg.continuum_count)


# ---------------------------------------------------------------------------
# grid oracle


def discrete_nash(players, base: dict, axes: dict, tol: float = 1e-9) -> np.ndarray:
    """Boolean mask of the joint grid where every player's block is a grid argmin.

    ``players`` is a list of (own_vars, objective, constraints); ``axes`` maps
    every free variable to its 1-D grid.  Constraint feasibility is evaluated
    at the full profile (shared constraints welcome).
    """
    order = list(axes)
    shape = tuple(len(axes[v]) for v in order)
    a = dict(base)
    for i, v in enumerate(order):
        s = [1] * len(order)
        s[i] = len(axes[v])
        a[v] = np.asarray(axes[v], dtype=float).reshape(s)
    mask = np.ones(shape, dtype=bool)
    for own, objective, constraints in players:
        F = np.broadcast_to(np.asarray(evaluate(objective, a), dtype=float), shape)
        feas = np.ones(shape, dtype=bool)
        for g in constraints:
            feas &= np.broadcast_to(np.asarray(evaluate(g, a), dtype=float), shape) <= 0.0
        Fm = np.where(feas, F, np.inf)
        own_axes = tuple(order.index(v) for v in own)
        best = Fm.min(axis=own_axes, keepdims=True)
        mask &= feas & (Fm <= best + tol * (1.0 + np.abs(np.where(np.isfinite(best), best, 0.0))))
    return mask


def brute_force_nep(problem: SlmfgProblem, x, grid_step: float = 0.05, box: tuple[float, float] = (-3.0, 3.0), max_points: int = 5_000_000) -> list[np.ndarray]:
    """Every grid profile whose blocks are all grid argmins given the rest."""
    x = [float(v) for v in np.ravel(x)]
    lx = dict(zip(problem.leader.variables, x))
    axis = grid_axis(box[0], box[1], grid_step)
    models = [FollowerModel(f) for f in problem.followers]
    if all(m.separable for m in models):
        per_follower = []
        for m in models:
            pts, F, G = m.grid(lx, box, grid_step, use_own_objective=True)
            feas = G <= 0.0
            if not feas.any():
                return []
            best = F[feas].min()
            keep = feas & (F <= best + 1e-9 * (1.0 + abs(best)))
            per_follower.append(pts[keep])
        out = [np.zeros(0)]
        for block in per_follower:
            out = [np.concatenate([o, b]) for o in out for b in block]
        return out
    axes = {v: axis for m in models for v in m.own}
    if axis.size ** len(axes) > max_points:
        raise ValueError("joint grid too large for the brute-force oracle; coarsen the grid")
    players = [(m.own, m.objective, m.constraints) for m in models]
    mask = discrete_nash(players, lx, axes)
    idx = np.argwhere(mask)
    return [axis[row] for row in idx]


# ---------------------------------------------------------------------------
# existence hypotheses


class Bullet(enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    UNKNOWN = "unknown"


@dataclass
class ExistenceReport:
    x: list[float]
    per_follower: dict[str, dict[str, Bullet]]
    notes: dict[str, list[str]] = field(default_factory=dict)

    def bullet(self, name: str) -> Bullet:
        vals = [d[name] for d in self.per_follower.values()]
        if any(v is Bullet.FAILS for v in vals):
            return Bullet.FAILS
        if all(v is Bullet.HOLDS for v in vals):
            return Bullet.HOLDS
        return Bullet.UNKNOWN


def check_existence_hypotheses(problem: SlmfgProblem, x, box: tuple[float, float] | None = None, cfg: RunConfig | None = None) -> ExistenceReport:
    """Check, per follower, the hypotheses of the classical existence theorem at ``x``.

    Compactness is certified only for convex-certified feasible sets whose
    coordinate extremes stay strictly inside a box ten times the search box.
    """
    cfg = cfg or DEFAULT
    box = box or cfg.box
    x = [float(v) for v in np.ravel(x)]
    lx = dict(zip(problem.leader.variables, x))
    rivals_box = {v: box for v in problem.follower_vars}
    out, notes = {}, {}
    for f in problem.followers:
        m = FollowerModel(f)
        res: dict[str, Bullet] = {}
        note: list[str] = []
        # only feasibility is read off the grid; rivals are parked at 0
        rivals0 = {v: 0.0 for v in problem.follower_vars if v not in m.own}
        pts, _, G = m.grid({**lx, **rivals0}, box, cfg.grid_step)
        feasible_pt = None
        if (G <= 0).any():
            feasible_pt = pts[np.argmax(G <= 0)]
        else:
            y, val = m.min_max_constraint(lx, pts[np.argmin(G)], box)
            if val <= cfg.feas_tol:
                feasible_pt = y
        res["nonempty"] = Bullet.HOLDS if feasible_pt is not None else Bullet.UNKNOWN
        if feasible_pt is None:
            note.append("no feasible point found on the search box")

        cons_convex = all(
            classify_convexity(g, m.own, dict.fromkeys(m.own, box), fixed=lx, seed=cfg.seed).convex
            or _redundant(g, m.own, lx, box, cfg.seed)
            for g in f.constraints
        )
        res["convex_set"] = Bullet.HOLDS if cons_convex else Bullet.UNKNOWN
        other = {v: b for v, b in rivals_box.items() if v not in m.own}
        ov = classify_convexity(f.objective, m.own, {**dict.fromkeys(m.own, box), **other}, fixed=lx, seed=cfg.seed)
        res["objective_convex"] = (
            Bullet.HOLDS if ov.convex else Bullet.FAILS if ov.witness is not None and ov.kind.name == "NONCONVEX_WITNESS" else Bullet.UNKNOWN
        )
        res["objective_continuous"] = Bullet.HOLDS  # polynomial

        if feasible_pt is None:
            res["compact"] = Bullet.UNKNOWN
        else:
            res["compact"] = _compactness(m, lx, feasible_pt, box, cons_convex, note)
        out[f.id] = res
        notes[f.id] = note
    return ExistenceReport(x, out, notes)


def _redundant(g, own, base, box, seed) -> bool:
    """Concave-certified constraint whose global maximum is <= 0: it never binds."""
    neg = classify_convexity(Negate(g), own, dict.fromkeys(own, box), fixed=base, seed=seed)
    if not neg.convex:
        return False
    from scipy.optimize import minimize

    fun = lambda y: -float(evaluate(g, {**base, **dict(zip(own, y))}))
    res = minimize(fun, np.zeros(len(own)), method="BFGS")
    # a concave function's local maximum is global; unbounded above shows up as a large value
    return bool(res.success and -res.fun <= 0.0)


def _compactness(m: FollowerModel, base, start, box, convex: bool, note: list[str]) -> Bullet:
    lo, hi = box
    R = 10.0 * max(abs(lo), abs(hi))
    big = (-R, R)
    from scipy.optimize import minimize

    reached_wall = False
    for i in range(m.dim):
        for sign in (1.0, -1.0):
            cons = []
            if m.constraints:
                cons.append({"type": "ineq", "fun": lambda y: -m.cons(base, y), "jac": lambda y: -m.jac(base, y)})
            e = np.zeros(m.dim)
            e[i] = sign
            res = minimize(lambda y: float(e @ y), start, jac=lambda y: e, bounds=[big] * m.dim,
                           constraints=cons, method="SLSQP", options={"maxiter": 300})
            y = np.asarray(res.x)
            if m.max_cons(base, y) <= 1e-6 and abs(y[i]) >= R * (1 - 1e-6):
                reached_wall = True
    if reached_wall:
        note.append(f"feasible points reach |y| = {R:g} (treated as unbounded)")
        return Bullet.FAILS
    if convex:
        return Bullet.HOLDS
    note.append("extremes stay inside the enclosing box, but the set is not convex-certified")
    return Bullet.UNKNOWN
