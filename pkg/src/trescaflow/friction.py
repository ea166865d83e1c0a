"""Tresca friction on the bottom wall: the exact functional, its penalty
regularization, the wall stress and the complementarity residual.

All traces are relative slips ``v1(x1, 0)`` (fluid velocity minus the wall
speed), sampled on the ``Nq`` bottom nodes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import MappedGrid, integrate_gamma0


@dataclass(frozen=True)
class FrictionModel:
    k: float
    delta: float
    eps_floor: float = 1e-6

    def __post_init__(self):
        if not self.k >= 0:
            raise ValueError(f"friction bound k must be >= 0, got {self.k}")
        if not 0 < self.delta <= 1:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if not self.eps_floor > 0:
            raise ValueError(f"eps_floor must be > 0, got {self.eps_floor}")

    def coefficient(self, w):
        """Lagged Picard coefficient k (w^2 + eps^2)^((delta - 1) / 2)."""
        w = np.asarray(w, dtype=float)
        return self.k * (w * w + self.eps_floor ** 2) ** (0.5 * (self.delta - 1.0))

    def g(self, w):
        """Regularized wall law g(w) = coefficient(w) * w."""
        w = np.asarray(w, dtype=float)
        if self.delta == 1.0:
            return self.k * w
        return self.coefficient(w) * w


@dataclass(frozen=True)
class WallTrace:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


def _values(trace) -> np.ndarray:
    return trace.values if isinstance(trace, WallTrace) else np.asarray(trace, dtype=float)


def j_exact(fm: FrictionModel, trace, grid: MappedGrid) -> float:
    return fm.k * integrate_gamma0(grid, np.abs(_values(trace)))


def j_delta(fm: FrictionModel, trace, grid: MappedGrid) -> float:
    w = np.abs(_values(trace))
    return fm.k / (1.0 + fm.delta) * integrate_gamma0(grid, w ** (1.0 + fm.delta))


def j_delta_prime(fm: FrictionModel, trace) -> WallTrace:
    return WallTrace(fm.g(_values(trace)))


def _bottom_v1(state):
    v1 = state.v1 if hasattr(state, "v1") else state[0]
    return np.asarray(v1, dtype=float)


def tangential_stress(state, grid: MappedGrid, nu: float) -> WallTrace:
    """nu * dv1/dx2 at the bottom wall, one-sided second order in s.

    The value is the shear rate times viscosity; the wall traction entering
    the Tresca law (outward normal -e2) is its negative, see
    :func:`wall_traction`.
    """
    if grid.Ns < 3:
        raise ValueError("stress stencil needs Ns >= 3")
    v1 = _bottom_v1(state)
    ds_v = (-3.0 * v1[:, 0] + 4.0 * v1[:, 1] - v1[:, 2]) / (2.0 * grid.ds)
    return WallTrace(nu * ds_v / grid.h)


def wall_traction(state, grid: MappedGrid, nu: float) -> WallTrace:
    """Tangential traction sigma_eta = (sigma n) . e1 with n = -e2 on the bottom wall."""
    return WallTrace(-tangential_stress(state, grid, nu).values)


def complementarity_residual(fm: FrictionModel, slip, stress, grid: MappedGrid):
    """(r_eq, r_bound) for the Tresca branch conditions.

    r_eq integrates |k|slip| + stress*slip| along the wall and r_bound is the
    excess of the stress magnitude over k.
    """
    w = _values(slip)
    s = _values(stress)
    if w.shape != s.shape:
        raise ValueError(f"slip and stress lengths differ: {w.shape} vs {s.shape}")
    r_eq = integrate_gamma0(grid, np.abs(fm.k * np.abs(w) + s * w))
    r_bound = max(0.0, float(np.max(np.abs(s))) - fm.k) if s.size else 0.0
    return r_eq, r_bound
