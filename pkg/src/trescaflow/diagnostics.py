"""Norms, energy monitoring, sampled functional constants and the absorbing-ball check."""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .friction import (FrictionModel, complementarity_residual, j_delta, tangential_stress,
                       wall_traction)
from .geometry import MappedGrid, integrate_domain
from .operators import a_form, discretization


@dataclass(frozen=True)
class EnergyRecord:
    t: float
    h_norm_sq: float
    v_norm_sq: float
    l4_norm: float
    j_value: float
    energy_residual: float
    slip_max: float
    stress_max: float
    comp_residual: float

    FIELDS = ("t", "h_norm_sq", "v_norm_sq", "l4_norm", "j_value", "energy_residual",
              "slip_max", "stress_max", "comp_residual")

    def row(self):
        return [getattr(self, f) for f in self.FIELDS]


@dataclass(frozen=True)
class ConstantsEstimate:
    lambda1: float
    c_lady: float
    hopf_ratio: float
    F: float

    def as_dict(self):
        return asdict(self)


def _vel(state):
    return (state.v1, state.v2) if hasattr(state, "v1") else tuple(state)


def compute_norms(state, grid: MappedGrid):
    """(|v|^2, ||v||^2, ||v||_L4)."""
    v1, v2 = _vel(state)
    mag2 = v1 * v1 + v2 * v2
    h2 = integrate_domain(grid, mag2)
    vn = a_form((v1, v2), (v1, v2), grid)
    l4 = integrate_domain(grid, mag2 * mag2) ** 0.25
    return h2, max(vn, 0.0), l4


def step_energy(state, fm: FrictionModel, grid: MappedGrid):
    """(|v|^2, ||v||^2, j_delta(v)) used by the per-step energy residual."""
    v1, v2 = _vel(state)
    return (integrate_domain(grid, v1 * v1 + v2 * v2),
            a_form((v1, v2), (v1, v2), grid),
            j_delta(fm, v1[:, 0], grid))


def energy_residual(prev, next, dt: float, F: float, nu: float) -> float:
    """Discrete d/dt|v|^2 + nu ||v||^2 + 2 j(v) - F between two records.

    ``prev``/``next`` are EnergyRecords (or any objects with ``h_norm_sq``,
    ``v_norm_sq`` and ``j_value``).
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return ((next.h_norm_sq - prev.h_norm_sq) / dt
            + 0.5 * nu * (next.v_norm_sq + prev.v_norm_sq)
            + (next.j_value + prev.j_value) - F)


def energy_record(state, fm, xi, grid, nu, residual: float = math.nan) -> EnergyRecord:
    """Snapshot diagnostics; ``residual`` is the largest per-step energy
    residual since the previous record (NaN for the initial record)."""
    h2, vn, l4 = compute_norms(state, grid)
    slip = state.v1[:, 0]
    jv = j_delta(fm, slip, grid)
    stress = tangential_stress(state, grid, nu).values
    r_eq, _ = complementarity_residual(fm, slip, wall_traction(state, grid, nu), grid)
    return EnergyRecord(float(state.t), h2, vn, l4, jv, float(residual),
                        float(np.max(np.abs(slip))), float(np.max(np.abs(stress))), r_eq)


def _balance_terms(state, fm, xi, grid, nu):
    v1, v2 = _vel(state)
    h2 = integrate_domain(grid, v1 * v1 + v2 * v2)
    an = a_form((v1, v2), (v1, v2), grid)
    w = v1[:, 0]
    wall = grid.dq * float(np.sum(fm.g(w) * w))
    # (L(v), v): the transport part is skew and drops out
    lv = integrate_domain(grid, (nu * xi.d2U - v2 * xi.dU) * v1)
    return h2, an, wall, lv


def energy_identity_defect(prev, next, dt, fm, xi, grid, nu) -> float:
    """Trapezoid-in-time defect of d/dt|v|^2 + 2nu||v||^2 + 2(g(v), v) = 2(L(v), v).

    Unlike the energy residual this is an equality, so its size measures the
    time-discretization error directly.
    """
    a = _balance_terms(prev, fm, xi, grid, nu)
    b = _balance_terms(next, fm, xi, grid, nu)
    return ((b[0] - a[0]) / dt + nu * (a[1] + b[1]) + (a[2] + b[2]) - (a[3] + b[3]))


# -- constants -----------------------------------------------------------------

class EigenError(RuntimeError):
    pass


def estimate_poincare(grid: MappedGrid, tol: float = 1e-8, maxiter: int = 200,
                      return_field: bool = False, seed: int = 0):
    """Smallest eigenvalue of the divergence-constrained discrete Laplacian.

    Inverse power iteration: each iterate solves the saddle-point system
    ``[[K, D^T], [D, -s I]] [y; p] = [M x; 0]`` (``s`` a tiny shift that
    removes the pressure null space) and is then projected.  The Rayleigh
    quotient ``x^T K x / x^T M x`` is the eigenvalue estimate.
    """
    from .projection import pressure_solver

    d = discretization(grid)
    K = sp.block_diag([d.K11, d.K22]).tocsr()
    M = np.concatenate([d.mass1, d.mass2])
    shift = 1e-10 * float(K.diagonal().max())
    A = sp.bmat([[K, d.D.T], [d.D, -shift * sp.identity(d.n_nodes)]]).tocsc()
    lu = splu(A)
    ps = pressure_solver(grid)
    n = d.n1 + d.n2

    def project(x):
        rhs = -(d.D @ x)
        scale = float(np.max(np.abs(rhs / ps.mass)))
        phi, _, _ = ps.solve(rhs, 1e-11 * max(scale, 1.0))
        return x + d.minv * (d.D.T @ phi)

    rng = np.random.default_rng(seed)
    x = project(rng.standard_normal(n))
    lam_old = math.inf
    for _ in range(maxiter):
        y = lu.solve(np.concatenate([M * x, np.zeros(d.n_nodes)]))[:n]
        y = project(y)
        x = y / math.sqrt(float(y @ (M * y)))
        lam = float(x @ (K @ x))
        if abs(lam - lam_old) <= tol * abs(lam):
            if return_field:
                return lam, d.unpack(x)
            return lam
        lam_old = lam
    raise EigenError(f"inverse iteration did not converge; last Rayleigh quotient {lam_old:.10g}")


def ladyzhenskaya_samples(grid: MappedGrid, n_samples: int, seed: int) -> np.ndarray:
    from .fields import random_admissible

    rng = np.random.default_rng(seed)
    out = np.full(n_samples, np.nan)
    for i in range(n_samples):
        mq = int(rng.integers(1, 7))
        ms = int(rng.integers(1, 7))
        v = random_admissible(grid, rng, mq=mq, ms=ms)
        h2, vn, l4 = compute_norms(v, grid)
        if h2 > 0 and vn > 0:
            out[i] = l4 / (h2 * vn) ** 0.25
    return out


def estimate_ladyzhenskaya(grid: MappedGrid, n_samples: int = 1000, seed: int = 0) -> float:
    """Sampled supremum of ||v||_L4 / (|v|^(1/2) ||v||^(1/2))."""
    if n_samples < 1000:
        raise ValueError(f"need n_samples >= 1000, got {n_samples}")
    r = ladyzhenskaya_samples(grid, n_samples, seed)
    if np.all(np.isnan(r)):
        raise ValueError("every sample was degenerate")
    return float(np.nanmax(r))


# -- absorbing ball ---------------------------------------------------------------

@dataclass(frozen=True)
class AbsorbingReport:
    margin: float
    radius_sq: float
    entry_time: float
    bound_offset: float


def absorbing_check(series, lambda1: float, F: float, nu: float) -> AbsorbingReport:
    """Worst excess of |v(t)|^2 over |v(0)|^2 exp(-nu lambda1 t) + F/(nu lambda1).

    ``entry_time`` is the first record time with |v|^2 <= rho^2 = 2F/(nu lambda1)
    (inf if never).
    """
    series = list(series)
    if not series:
        raise ValueError("empty series")
    rate = nu * lambda1
    t0 = series[0].t
    h0 = series[0].h_norm_sq
    offset = F / rate
    margin = max(r.h_norm_sq - (h0 * math.exp(-rate * (r.t - t0)) + offset) for r in series)
    rho2 = 2.0 * F / rate
    entry = next((r.t for r in series if r.h_norm_sq <= rho2), math.inf)
    return AbsorbingReport(margin, rho2, entry, offset)
