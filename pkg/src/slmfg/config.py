"""Run configuration shared by every solver and checker."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path


@dataclass(frozen=True)
class RunConfig:
    feas_tol: float = 1e-8
    tol: float = 1e-6  # equilibrium gap / KKT residual
    cluster_eps: float = 1e-4
    activity_tol: float = 1e-6
    rank_tol: float = 1e-9
    box: tuple[float, float] = (-3.0, 3.0)
    grid_step: float = 0.05
    seed: int = 0
    n_starts: int = 16
    max_iter: int = 500
    unbounded_margin: float = 1e-3
    continuum_count: int = 4
    crcq_radius: float = 1e-2
    crcq_samples: int = 64
    local_radius: float = 0.15
    local_step: float = 0.01
    multiplier_samples: int = 8
    fmt: str = "human"

    def __post_init__(self):
        positive = ("feas_tol", "tol", "cluster_eps", "activity_tol", "rank_tol", "grid_step", "local_radius", "local_step")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        lo, hi = self.box
        if not lo < hi:
            raise ValueError("box must satisfy lo < hi")
        if self.fmt not in ("human", "records"):
            raise ValueError("fmt must be 'human' or 'records'")
        object.__setattr__(self, "box", (float(lo), float(hi)))

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_file(cls, path: str | Path, base: "RunConfig | None" = None) -> "RunConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "box" in data:
            data["box"] = tuple(data["box"])
        return (base or cls()).with_(**data)


DEFAULT = RunConfig()
