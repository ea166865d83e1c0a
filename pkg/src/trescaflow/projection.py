"""Discrete Helmholtz projection onto divergence-free fields.

The pressure operator is ``K_p = D M^-1 D^T`` with ``D`` the weighted
divergence and ``M`` the lumped velocity mass; its Neumann-type behaviour at
the walls comes out of the algebra (the wall-normal velocity is not an
unknown).  ``K_p`` is singular (constants and the collocated odd-even modes),
so it is solved by conjugate gradients preconditioned with a sparse LU of a
slightly shifted copy.
"""
from __future__ import annotations

import weakref

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .geometry import MappedGrid
from .operators import Discretization, discretization


class ProjectionError(RuntimeError):
    pass


class PressureSolver:
    def __init__(self, disc: Discretization):
        self.disc = disc
        D = disc.D
        self.Kp = (D @ sp.diags(disc.minv) @ D.T).tocsr()
        shift = 1e-8 * float(self.Kp.diagonal().max())
        self._lu = splu((self.Kp + shift * sp.identity(self.Kp.shape[0])).tocsc())
        self.mass = disc.grid.mass.ravel()

    def solve(self, rhs, tol, maxiter=200):
        """PCG for K_p phi = rhs; stops when max |r / mass| <= tol.

        Returns (phi, final residual, iterations).
        """
        x = np.zeros_like(rhs)
        r = rhs.copy()
        res = float(np.max(np.abs(r / self.mass)))
        if res <= tol:
            return x, res, 0
        z = self._lu.solve(r)
        p = z.copy()
        rz = float(r @ z)
        for it in range(1, maxiter + 1):
            Ap = self.Kp @ p
            pAp = float(p @ Ap)
            if pAp <= 0.0:
                break
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            res = float(np.max(np.abs(r / self.mass)))
            if res <= tol:
                return x, res, it
            z = self._lu.solve(r)
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        raise ProjectionError(f"pressure solve did not reach tol={tol:g}; residual {res:.3e}")


_SOLVERS: "weakref.WeakKeyDictionary[MappedGrid, PressureSolver]" = weakref.WeakKeyDictionary()


def pressure_solver(grid: MappedGrid) -> PressureSolver:
    s = _SOLVERS.get(grid)
    if s is None:
        s = _SOLVERS[grid] = PressureSolver(discretization(grid))
    return s


def mean_free(p, grid: MappedGrid):
    p = np.asarray(p, dtype=float)
    return p - np.sum(grid.mass * p) / np.sum(grid.mass)


def project_velocity(v1, v2, grid: MappedGrid, proj_tol: float = 1e-10):
    """Project (v1, v2) after applying the wall conditions.

    Returns ``(v1, v2, phi)`` where ``phi`` is the mean-free potential whose
    discrete gradient was removed.
    """
    disc = discretization(grid)
    solver = pressure_solver(grid)
    v1, v2 = disc.apply_bc(v1, v2)
    x = disc.pack(v1, v2)
    phi, _, _ = solver.solve(-(disc.D @ x), proj_tol)
    x = x + disc.minv * (disc.D.T @ phi)
    v1, v2 = disc.unpack(x)
    return v1, v2, mean_free(phi.reshape(grid.shape), grid)


def project_divergence_free(state, grid: MappedGrid, proj_tol: float = 1e-10):
    """Return a copy of ``state`` with a divergence-free velocity; p is kept."""
    v1, v2, _ = project_velocity(state.v1, state.v2, grid, proj_tol)
    return state.replace(v1=v1, v2=v2)
