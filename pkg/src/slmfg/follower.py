"""Numerical view of one follower's parametric problem.

``FollowerModel`` precomputes the symbolic gradients of a follower's
objective and constraints; the helpers evaluate them at a fixed leader
decision and rival profile, on grids (vectorized) or at single points.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .expr import Expr, VarId, diff, evaluate, from_poly, simplify, to_poly
from .linalg import grid_axis
from .model import FollowerProblem

MAX_GRID_POINTS = 400_000


class FollowerModel:
    def __init__(self, f: FollowerProblem):
        self.f = f
        self.id = f.id
        self.own: tuple[VarId, ...] = f.variables
        own = set(self.own)
        self.objective = simplify(f.objective)
        self.constraints = tuple(simplify(g) for g in f.constraints)
        self.grad_objective = [simplify(diff(f.objective, v)) for v in self.own]
        self.jacobian = [[simplify(diff(g, v)) for v in self.own] for g in f.constraints]
        poly = to_poly(f.objective)
        # own-separable: no monomial mixes own variables with a rival's
        self.separable = True
        own_part = {}
        for mono, c in poly.items():
            vs = {v for v, _ in mono}
            touches_own = bool(vs & own)
            if touches_own:
                own_part[mono] = c
                if any(v.block != "x" and v not in own for v in vs):
                    self.separable = False
        self.own_objective: Expr = from_poly(own_part)

    @property
    def dim(self) -> int:
        return len(self.own)

    @property
    def p(self) -> int:
        return len(self.constraints)

    def assign(self, base: Mapping[VarId, float], y) -> dict:
        a = dict(base)
        a.update(zip(self.own, y))
        return a

    def value(self, base, y) -> float:
        return float(evaluate(self.objective, self.assign(base, y)))

    def cons(self, base, y) -> np.ndarray:
        a = self.assign(base, y)
        return np.array([float(evaluate(g, a)) for g in self.constraints])

    def max_cons(self, base, y) -> float:
        c = self.cons(base, y)
        return float(c.max()) if c.size else -np.inf

    def grad(self, base, y) -> np.ndarray:
        a = self.assign(base, y)
        return np.array([float(evaluate(d, a)) for d in self.grad_objective])

    def jac(self, base, y) -> np.ndarray:
        """Rows are constraints, columns own variables."""
        a = self.assign(base, y)
        return np.array([[float(evaluate(d, a)) for d in row] for row in self.jacobian]).reshape(self.p, self.dim)

    # -- grids -------------------------------------------------------------

    def grid(self, base, box: tuple[float, float], step: float, use_own_objective: bool = False):
        """Evaluate on a regular grid over ``box`` in every own coordinate.

        Returns (points (N, n), objective (N,), max constraint (N,)).
        """
        lo, hi = box
        n = self.dim
        while True:
            axis = grid_axis(lo, hi, step)
            if axis.size**n <= MAX_GRID_POINTS:
                break
            step *= 1.5
        mesh = np.meshgrid(*([axis] * n), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        a = dict(base)
        for i, v in enumerate(self.own):
            a[v] = pts[:, i]
        obj_expr = self.own_objective if use_own_objective else self.objective
        F = np.broadcast_to(np.asarray(evaluate(obj_expr, a), dtype=float), (len(pts),)).copy()
        if self.constraints:
            G = np.stack(
                [np.broadcast_to(np.asarray(evaluate(g, a), dtype=float), (len(pts),)) for g in self.constraints]
            ).max(axis=0)
        else:
            G = np.full(len(pts), -np.inf)
        return pts, F, G

    # -- local solves ------------------------------------------------------

    def local_min(self, base, start, box, maxiter: int = 200):
        bounds = [box] * self.dim
        cons = []
        if self.constraints:
            cons.append(
                {
                    "type": "ineq",
                    "fun": lambda y: -self.cons(base, y),
                    "jac": lambda y: -self.jac(base, y),
                }
            )
        res = minimize(
            lambda y: self.value(base, y),
            np.asarray(start, dtype=float),
            jac=lambda y: self.grad(base, y),
            bounds=bounds,
            constraints=cons,
            method="SLSQP",
            options={"maxiter": maxiter, "ftol": 1e-14},
        )
        return np.asarray(res.x, dtype=float)

    def min_max_constraint(self, base, start, box, maxiter: int = 200):
        """Minimize max_j g_j over the box (epigraph form).  Returns (y, value)."""
        if not self.constraints:
            return np.asarray(start, dtype=float), -np.inf
        n = self.dim
        z0 = np.append(np.asarray(start, dtype=float), self.max_cons(base, start))
        cons = [
            {
                "type": "ineq",
                "fun": lambda z: z[-1] - self.cons(base, z[:-1]),
                "jac": lambda z: np.hstack([-self.jac(base, z[:-1]), np.ones((self.p, 1))]),
            }
        ]
        res = minimize(
            lambda z: z[-1],
            z0,
            jac=lambda z: np.append(np.zeros(n), 1.0),
            bounds=[box] * n + [(None, None)],
            constraints=cons,
            method="SLSQP",
            options={"maxiter": maxiter, "ftol": 1e-15},
        )
        y = np.clip(np.asarray(res.x[:-1], dtype=float), *box)
        return y, self.max_cons(base, y)

    def repair(self, base, y, anchor) -> np.ndarray:
        """Pull ``y`` toward an exactly feasible ``anchor`` until it is exactly feasible."""
        y = np.asarray(y, dtype=float)
        if self.max_cons(base, y) <= 0.0 or anchor is None:
            return y
        anchor = np.asarray(anchor, dtype=float)
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self.max_cons(base, anchor + mid * (y - anchor)) <= 0.0:
                lo = mid
            else:
                hi = mid
        return anchor + lo * (y - anchor)


def cluster(points: Sequence[np.ndarray], eps: float) -> list[np.ndarray]:
    """Deterministic greedy clustering after lexicographic sort (inf-norm radius)."""
    pts = sorted((np.asarray(p, dtype=float) for p in points), key=lambda p: tuple(np.round(p, 12)))
    kept: list[np.ndarray] = []
    for p in pts:
        if all(np.max(np.abs(p - q)) > eps for q in kept):
            kept.append(p)
    return kept
