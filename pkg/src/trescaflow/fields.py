"""Random smooth admissible velocity fields.

Fields come from a random stream function
``psi = sum c_mn sin(n pi s) (1 - s) T_m(q)`` which vanishes with its s-slope
on the top wall and is constant on the bottom wall, so the velocity it
generates meets both wall conditions and is divergence-free before
discretization.  The discrete projection then removes the small remainder.
"""
from __future__ import annotations

import numpy as np

from .geometry import MappedGrid
from .projection import project_velocity


def stream_velocity(grid: MappedGrid, coeffs: np.ndarray):
    """Velocity from stream-function coefficients, shape (2*Mq + 1, Ms).

    Row 0 is the q-mean mode, rows 2m-1 / 2m are cos / sin of wavenumber m.
    """
    nrow, nmodes = coeffs.shape
    q = grid.q[:, None]
    s = grid.s[None, :]
    kq = 2.0 * np.pi / grid.L
    psi_s = np.zeros(grid.shape)
    psi_q = np.zeros(grid.shape)
    for n in range(1, nmodes + 1):
        a = n * np.pi
        f = np.sin(a * s) * (1.0 - s)
        fs = a * np.cos(a * s) * (1.0 - s) - np.sin(a * s)
        for r in range(nrow):
            c = coeffs[r, n - 1]
            if c == 0.0:
                continue
            if r == 0:
                t, tq = np.ones_like(q), np.zeros_like(q)
            else:
                m = (r + 1) // 2
                if r % 2:
                    t, tq = np.cos(m * kq * q), -m * kq * np.sin(m * kq * q)
                else:
                    t, tq = np.sin(m * kq * q), m * kq * np.cos(m * kq * q)
            psi_s += c * t * fs
            psi_q += c * tq * f
    h = grid.h[:, None]
    slope = s * (grid.dh / grid.h)[:, None]
    v1 = psi_s / h
    v2 = -(psi_q - slope * psi_s)
    return v1, v2


def random_coefficients(rng: np.random.Generator, mq: int = 4, ms: int = 4, decay: float = 1.0):
    m = np.concatenate([[0], np.repeat(np.arange(1, mq + 1), 2)])[:, None]
    n = np.arange(1, ms + 1)[None, :]
    scale = (1.0 + m ** 2 + n ** 2) ** (-decay)
    return rng.standard_normal((2 * mq + 1, ms)) * scale


def random_admissible(grid: MappedGrid, rng: np.random.Generator, mq: int = 4, ms: int = 4,
                      decay: float = 1.0, proj_tol: float = 1e-10):
    """One random smooth, projected, boundary-conditioned field (v1, v2)."""
    v1, v2 = stream_velocity(grid, random_coefficients(rng, mq, ms, decay))
    v1, v2, _ = project_velocity(v1, v2, grid, proj_tol)
    return v1, v2
