"""Background shear layer carrying the wall speed into the channel.

``U(x2) = U0 * phi(x2 / (alpha * h_min))`` with the quintic
``phi(r) = 1 - 10 r^3 + 15 r^4 - 6 r^5`` on [0, 1] and zero beyond, so U
takes the wall speed at the bottom with zero slope and curvature, and joins
zero with matching first and second derivatives at the layer edge.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import MappedGrid, integrate_domain
from .operators import a_form


def bump(r):
    r = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
    return 1.0 - r ** 3 * (10.0 - 15.0 * r + 6.0 * r * r)


def bump_d1(r):
    r = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
    return -30.0 * r * r * (1.0 - r) ** 2


def bump_d2(r):
    r = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
    return -60.0 * r * (1.0 - r) * (1.0 - 2.0 * r)


@dataclass(frozen=True, eq=False)
class BackgroundFlow:
    U0: float
    alpha: float
    nu: float
    layer: float
    U: np.ndarray = field(repr=False)
    dU: np.ndarray = field(repr=False)
    d2U: np.ndarray = field(repr=False)
    h_norm_sq: float = 0.0
    v_norm_sq: float = 0.0
    forcing_bound_F: float = 0.0

    def profile(self, x2, order: int = 0):
        r = np.asarray(x2, dtype=float) / self.layer
        if order == 0:
            return self.U0 * bump(r)
        if order == 1:
            return self.U0 * bump_d1(r) / self.layer
        return self.U0 * bump_d2(r) / self.layer ** 2

    @property
    def lemma_sum(self) -> float:
        """|xi|^2 + |grad xi|^2, the alternative forcing bound."""
        return self.h_norm_sq + self.v_norm_sq


def build_background(U0: float, alpha: float, grid: MappedGrid, nu: float) -> BackgroundFlow:
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    h_min = grid.geom.h_min()
    layer = alpha * h_min
    if layer < 3.0 * grid.ds * float(grid.h.max()):
        raise ValueError(
            f"background layer under-resolved: alpha*h_min = {layer:.4g} spans fewer than 3 grid layers")
    x2 = grid.x2
    r = x2 / layer
    U = U0 * bump(r)
    dU = U0 * bump_d1(r) / layer
    d2U = U0 * bump_d2(r) / layer ** 2
    U[:, 0] = U0
    dU[:, 0] = 0.0
    for a in (U, dU, d2U):
        a.setflags(write=False)
    hn = integrate_domain(grid, U ** 2)
    vn = integrate_domain(grid, dU ** 2)
    return BackgroundFlow(float(U0), float(alpha), float(nu), layer, U, dU, d2U, hn, vn, 2.0 * nu * vn)


def background_norms(xi: BackgroundFlow, grid: MappedGrid):
    """(|xi|^2, ||xi||^2, F) with F = 2 nu ||xi||^2."""
    return xi.h_norm_sq, xi.v_norm_sq, xi.forcing_bound_F


def hopf_ratio_samples(xi: BackgroundFlow, grid: MappedGrid, n_samples: int, seed: int) -> np.ndarray:
    """|b(v, xi, v)| / ||v||^2 for each random admissible sample (NaN if degenerate)."""
    from .fields import random_admissible

    rng = np.random.default_rng(seed)
    out = np.empty(n_samples)
    for n in range(n_samples):
        v1, v2 = random_admissible(grid, rng)
        denom = a_form((v1, v2), (v1, v2), grid)
        if not denom > 1e-300:
            out[n] = np.nan
            continue
        # (v . grad) xi . v reduces to v2 U' v1 for a shear background
        out[n] = abs(integrate_domain(grid, v2 * xi.dU * v1)) / denom
    return out


def hopf_ratio_estimate(xi: BackgroundFlow, grid: MappedGrid, n_samples: int = 100, seed: int = 0) -> float:
    if n_samples < 100:
        raise ValueError(f"need n_samples >= 100, got {n_samples}")
    ratios = hopf_ratio_samples(xi, grid, n_samples, seed)
    if np.all(np.isnan(ratios)):
        raise ValueError("every sample was degenerate (||v|| = 0)")
    return float(np.nanmax(ratios))
