"""Solver state and configuration containers."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class State:
    """Perturbation velocity (v1, v2), pressure p and time t on the grid nodes.

    ``history`` carries the previous explicit right-hand side for the
    two-step Adams-Bashforth update (None before the first step).
    """

    v1: np.ndarray
    v2: np.ndarray
    p: np.ndarray
    t: float = 0.0
    history: np.ndarray | None = None

    def replace(self, **kw) -> "State":
        return dataclasses.replace(self, **kw)

    @classmethod
    def zeros(cls, grid, t: float = 0.0) -> "State":
        z = np.zeros(grid.shape)
        return cls(z.copy(), z.copy(), z.copy(), t)

    @property
    def velocity(self):
        return (self.v1, self.v2)


@dataclass(frozen=True)
class SolverConfig:
    nu: float
    dt: float | None = None
    cfl: float = 1.0
    proj_tol: float = 1e-10
    picard_tol: float = 1e-10
    picard_max: int = 50
    T_end: float = 1.0
    snapshot_dt: float = 0.1

    def __post_init__(self):
        for name in ("nu", "cfl", "proj_tol", "picard_tol", "snapshot_dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.T_end >= 0:
            raise ValueError(f"T_end must be >= 0, got {self.T_end}")
        if int(self.picard_max) < 1:
            raise ValueError(f"picard_max must be >= 1, got {self.picard_max}")
