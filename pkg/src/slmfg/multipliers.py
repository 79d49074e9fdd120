"""Lagrange multiplier sets of a follower's KKT system as explicit polyhedra.

At a feasible point the multiplier set is

    { lam >= 0 : A lam_active = b, lam_inactive = 0 }

with the columns of ``A`` the own-variable gradients of the active
constraints and ``b`` the negated objective gradient.  Vertices are found by
exhaustive basic-solution enumeration: every column subset of size rank(A)
that forms a basis yields a candidate, kept when nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.optimize import nnls

from .follower import FollowerModel
from .linalg import numerical_rank
from .model import SlmfgProblem

VERTEX_DEDUP = 1e-7


class EmptyPolytope(ValueError):
    pass


class InfeasiblePoint(ValueError):
    pass


@dataclass(frozen=True)
class ActiveSet:
    fid: str
    indices: tuple[int, ...]
    p: int
    activity_tol: float


@dataclass
class MultiplierPolytope:
    active: ActiveSet
    A: np.ndarray  # n_f x |active|
    b: np.ndarray  # n_f
    constraint_values: np.ndarray
    rank_tol: float = 1e-9
    tol: float = 1e-9

    @property
    def p(self) -> int:
        return self.active.p

    def rank(self) -> int:
        return numerical_rank(self.A, self.rank_tol)

    def full(self, lam_active) -> np.ndarray:
        out = np.zeros(self.p)
        out[list(self.active.indices)] = lam_active
        return out

    def contains(self, lam, tol: float = 1e-8) -> bool:
        lam = np.asarray(lam, dtype=float)
        inactive = [j for j in range(self.p) if j not in self.active.indices]
        if np.any(lam < -tol) or np.any(np.abs(lam[inactive]) > tol):
            return False
        sub = lam[list(self.active.indices)]
        return bool(np.max(np.abs(self.A @ sub - self.b), initial=0.0) <= tol * (1 + np.abs(self.b).max(initial=0.0)))

    def _basic_solutions(self, A, b) -> list[np.ndarray]:
        k = A.shape[1]
        r = numerical_rank(A, self.rank_tol)
        scale = 1.0 + np.abs(b).max(initial=0.0)
        out: list[np.ndarray] = []
        if r == 0:
            if np.abs(b).max(initial=0.0) <= self.tol * scale:
                out.append(np.zeros(k))
            return out
        for basis in combinations(range(k), r):
            AB = A[:, basis]
            if numerical_rank(AB, self.rank_tol) < r:
                continue
            lamB, *_ = np.linalg.lstsq(AB, b, rcond=None)
            if np.max(np.abs(AB @ lamB - b)) > 1e-9 * scale * max(1.0, np.abs(AB).max()):
                continue
            if np.any(lamB < -self.tol * max(1.0, np.abs(lamB).max())):
                continue
            lam = np.zeros(k)
            lam[list(basis)] = np.maximum(lamB, 0.0)
            if all(np.max(np.abs(lam - q)) > VERTEX_DEDUP for q in out):
                out.append(lam)
        return out

    def vertices_active(self) -> list[np.ndarray]:
        return self._basic_solutions(self.A, self.b)

    def vertices(self) -> list[np.ndarray]:
        """Vertex list in full (p-dimensional) coordinates, ordered by basis."""
        return [self.full(v) for v in self.vertices_active()]

    def rays(self) -> list[np.ndarray]:
        """Extreme recession directions (normalized to sum 1); empty iff bounded."""
        k = self.A.shape[1]
        if k == 0:
            return []
        A = np.vstack([self.A, np.ones((1, k))])
        b = np.append(np.zeros(self.A.shape[0]), 1.0)
        return [self.full(d) for d in self._basic_solutions(A, b)]

    def is_empty(self) -> bool:
        return not self.vertices_active()

    @property
    def bounded(self) -> bool:
        return not self.rays()

    def least_residual(self) -> float:
        """min over lam >= 0 of ||A lam - b||_inf (via nonnegative least squares)."""
        if self.A.shape[1] == 0:
            return float(np.abs(self.b).max(initial=0.0))
        lam, _ = nnls(self.A, self.b)
        return float(np.abs(self.A @ lam - self.b).max(initial=0.0))


def polytope_from_model(m: FollowerModel, base: dict, y, activity_tol: float = 1e-6, fid: str | None = None,
                        check_feasible: bool = True, rank_tol: float = 1e-9) -> MultiplierPolytope:
    y = np.asarray(y, dtype=float)
    g = m.cons(base, y)
    if check_feasible and g.size and g.max() > activity_tol:
        raise InfeasiblePoint(f"follower {m.id}: point violates constraint {int(g.argmax())} by {g.max():.3g}")
    active = tuple(int(j) for j in np.flatnonzero(np.abs(g) <= activity_tol))
    J = m.jac(base, y)
    A = J[list(active), :].T if active else np.zeros((m.dim, 0))
    b = -m.grad(base, y)
    return MultiplierPolytope(ActiveSet(fid or m.id, active, m.p, activity_tol), A, b, g, rank_tol=rank_tol)


def multiplier_polytope(problem: SlmfgProblem, fid: str, x, y, activity_tol: float = 1e-6, rank_tol: float = 1e-9) -> MultiplierPolytope:
    """Multiplier set of follower ``fid`` at (x, y^F); ``y`` is the full follower profile."""
    from .nep import _blocks

    ys = _blocks(problem, y)
    x = [float(v) for v in np.ravel(x)]
    f = problem.follower(fid)
    m = FollowerModel(f)
    base = dict(zip(problem.leader.variables, x))
    for g, yg in zip(problem.followers, ys):
        base.update(zip(g.variables, map(float, yg)))
    idx = problem.follower_ids.index(fid)
    return polytope_from_model(m, base, ys[idx], activity_tol, fid=fid, rank_tol=rank_tol)


def is_empty(poly: MultiplierPolytope) -> bool:
    return poly.is_empty()


def enumerate_vertices(poly: MultiplierPolytope) -> list[np.ndarray]:
    verts = poly.vertices()
    if not verts:
        raise EmptyPolytope(f"multiplier set of follower {poly.active.fid} is empty")
    return verts


def sample_multipliers(poly: MultiplierPolytope, n: int, seed: int = 0, ray_scale: float = 1.0) -> list[np.ndarray]:
    """Random convex combinations of the vertices (plus scaled rays if unbounded)."""
    if n <= 0:
        return []
    verts = poly.vertices()
    if not verts:
        raise EmptyPolytope(f"multiplier set of follower {poly.active.fid} is empty")
    rays = poly.rays()
    rng = np.random.default_rng(seed)
    V = np.array(verts)
    out = []
    for _ in range(n):
        w = rng.dirichlet(np.ones(len(verts))) if len(verts) > 1 else np.ones(1)
        lam = w @ V
        if rays:
            lam = lam + ray_scale * rng.uniform(0, 1, size=len(rays)) @ np.array(rays)
        out.append(lam)
    return out


def brute_force_vertices(A, b, tol: float = 1e-9) -> list[np.ndarray]:
    """Vertices of {lam >= 0 : A lam = b} by intersecting every choice of
    coordinate hyperplanes lam_j = 0 with the equality system and keeping
    unique solutions.  Exponential; test oracle only."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    k = A.shape[1]
    found: list[np.ndarray] = []
    for nz in range(k + 1):
        for zero_set in combinations(range(k), nz):
            free = [j for j in range(k) if j not in zero_set]
            M = A[:, free]
            if free:
                sol, *_ = np.linalg.lstsq(M, b, rcond=None)
                # unique solution needed: free columns independent
                if np.linalg.matrix_rank(M, tol=1e-10) < len(free):
                    continue
                if np.max(np.abs(M @ sol - b), initial=0.0) > 1e-8 * (1 + np.abs(b).max(initial=0.0)):
                    continue
            else:
                if np.abs(b).max(initial=0.0) > 1e-8:
                    continue
                sol = np.zeros(0)
            if np.any(sol < -tol):
                continue
            lam = np.zeros(k)
            lam[free] = np.maximum(sol, 0.0)
            if all(np.max(np.abs(lam - q)) > 1e-7 for q in found):
                found.append(lam)
    return found
