"""Periodic channel with a wavy top wall and its terrain-following grid.

The physical domain is ``0 < x1 < L``, ``0 < x2 < h(x1)`` with ``h`` given as a
truncated trigonometric series.  It is mapped onto the rectangle
``(q, s) in [0, L) x [0, 1]`` with ``q = x1`` and ``s = x2 / h(x1)``; the
bottom wall (s = 0) is the friction boundary and the top wall (s = 1) is a
no-slip wall.

Node arrays on a :class:`MappedGrid` have shape ``(Nq, Ns + 1)``: axis 0 is the
periodic q direction, axis 1 runs from the bottom wall (j = 0) to the top
wall (j = Ns).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelGeometry:
    period_L: float
    h_mean: float
    h_cos: tuple[float, ...] = ()
    h_sin: tuple[float, ...] = ()
    Nq: int = 32
    Ns: int = 32

    def __post_init__(self):
        object.__setattr__(self, "h_cos", tuple(float(c) for c in self.h_cos))
        object.__setattr__(self, "h_sin", tuple(float(c) for c in self.h_sin))
        if not self.period_L > 0:
            raise GeometryError(f"period_L must be positive, got {self.period_L}")
        if self.Nq < 8 or self.Ns < 8:
            raise GeometryError(f"need Nq >= 8 and Ns >= 8, got Nq={self.Nq}, Ns={self.Ns}")

    @property
    def highest_mode(self) -> int:
        modes = [k + 1 for k, c in enumerate(self.h_cos) if c != 0.0]
        modes += [k + 1 for k, c in enumerate(self.h_sin) if c != 0.0]
        return max(modes, default=0)

    def _series(self, x1, order):
        x1 = np.asarray(x1, dtype=float)
        omega = 2.0 * np.pi / self.period_L
        out = np.full(x1.shape, self.h_mean if order == 0 else 0.0)
        for k, (a, b) in enumerate(_pad(self.h_cos, self.h_sin), start=1):
            w = k * omega
            c, s = np.cos(w * x1), np.sin(w * x1)
            if order == 0:
                out = out + a * c + b * s
            elif order == 1:
                out = out + w * (-a * s + b * c)
            else:
                out = out - w * w * (a * c + b * s)
        return out

    def h(self, x1):
        return self._series(x1, 0)

    def dh(self, x1):
        return self._series(x1, 1)

    def d2h(self, x1):
        return self._series(x1, 2)

    def h_min(self) -> float:
        """Minimum of h over one period (dense sampling, then a bounded polish)."""
        x = np.linspace(0.0, self.period_L, 64 * self.Nq, endpoint=False)
        hx = self.h(x)
        i = int(np.argmin(hx))
        if self.highest_mode == 0:
            return float(hx[i])
        dx = x[1] - x[0]
        res = minimize_scalar(lambda t: float(self.h(t)), bounds=(x[i] - dx, x[i] + dx),
                              method="bounded", options={"xatol": 1e-13})
        return float(min(hx[i], res.fun))


def _pad(a, b):
    n = max(len(a), len(b))
    a = tuple(a) + (0.0,) * (n - len(a))
    b = tuple(b) + (0.0,) * (n - len(b))
    return list(zip(a, b))


@dataclass(frozen=True, eq=False)
class MappedGrid:
    geom: ChannelGeometry
    dq: float
    ds: float
    q: np.ndarray
    s: np.ndarray
    h: np.ndarray
    dh: np.ndarray
    jac: np.ndarray
    weights: np.ndarray = field(repr=False)

    @property
    def Nq(self) -> int:
        return self.geom.Nq

    @property
    def Ns(self) -> int:
        return self.geom.Ns

    @property
    def shape(self) -> tuple[int, int]:
        return (self.geom.Nq, self.geom.Ns + 1)

    @property
    def L(self) -> float:
        return self.geom.period_L

    @property
    def x2(self) -> np.ndarray:
        """Physical height of every node, shape (Nq, Ns + 1)."""
        return self.h[:, None] * self.s[None, :]

    @property
    def mass(self) -> np.ndarray:
        """Lumped nodal quadrature weights including the Jacobian."""
        return self.jac * self.weights

    @property
    def min_spacing(self) -> float:
        return float(min(self.dq, self.h.min() * self.ds))

    def same_as(self, other: "MappedGrid") -> bool:
        return self is other or (self.geom == other.geom)


def build_grid(geom: ChannelGeometry) -> MappedGrid:
    """Sample the geometry on the mapped grid; h and h' come from the series."""
    if geom.highest_mode and geom.Nq < 8 * geom.highest_mode:
        raise GeometryError(
            f"Nq={geom.Nq} under-resolves h: need Nq >= 8 x highest mode ({geom.highest_mode})")
    x_check = np.linspace(0.0, geom.period_L, 4 * geom.Nq, endpoint=False)
    h_check = geom.h(x_check)
    if np.any(h_check <= 0.0):
        bad = x_check[int(np.argmin(h_check))]
        raise GeometryError(f"h must be positive; h(x1={bad:.6g}) = {geom.h(bad):.6g}")

    dq = geom.period_L / geom.Nq
    ds = 1.0 / geom.Ns
    q = dq * np.arange(geom.Nq)
    s = ds * np.arange(geom.Ns + 1)
    h = geom.h(q)
    dh = geom.dh(q)
    jac = np.repeat((h * dq * ds)[:, None], geom.Ns + 1, axis=1)
    ws = np.ones(geom.Ns + 1)
    ws[0] = ws[-1] = 0.5
    weights = np.repeat(ws[None, :], geom.Nq, axis=0)
    for a in (q, s, h, dh, jac, weights):
        a.setflags(write=False)
    return MappedGrid(geom, dq, ds, q, s, h, dh, jac, weights)


def integrate_domain(grid: MappedGrid, f) -> float:
    """Trapezoid rule in (q, s) with Jacobian weights."""
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    return float(np.sum(grid.mass * f))


def integrate_gamma0(grid: MappedGrid, g) -> float:
    """Periodic trapezoid rule along the bottom wall."""
    g = np.asarray(g, dtype=float)
    if g.shape != (grid.Nq,):
        raise ValueError(f"trace length {g.shape} does not match Nq={grid.Nq}")
    return float(grid.dq * np.sum(g))
