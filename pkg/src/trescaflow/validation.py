"""Plane Couette flow driven through the friction wall: closed forms and runs.

With a flat top at height ``H`` and no x1 dependence the physical velocity
is linear, ``u1 = u_b (1 - x2 / H)``.  The bottom speed ``u_b`` follows from
the wall law applied to the slip ``u_b - U0``:

* exact Tresca: stick (``u_b = U0``) when ``nu U0 / H <= k``, otherwise the
  traction saturates and ``u_b = k H / nu``;
* penalty law: ``nu u_b / H = g(U0 - u_b)``, a scalar root.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .background import build_background
from .diagnostics import step_energy
from .friction import FrictionModel, complementarity_residual, tangential_stress, wall_traction
from .geometry import ChannelGeometry, build_grid
from .solver import Stepper
from .state import SolverConfig, State


def tresca_bottom_speed(U0: float, k: float, nu: float, H: float) -> float:
    if nu * abs(U0) / H <= k:
        return U0
    return math.copysign(k * H / nu, U0)


def penalty_bottom_speed(U0: float, fm: FrictionModel, nu: float, H: float) -> float:
    """Root of nu u_b / H = g(U0 - u_b) on [0, U0] (U0 > 0)."""
    if U0 == 0:
        return 0.0
    f = lambda ub: nu * ub / H - float(fm.g(U0 - ub))
    return brentq(f, 0.0, U0, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


@dataclass
class CouetteResult:
    N: int
    regime: str
    t: float
    steps: int
    bottom_speed: float
    err_tresca: float
    err_penalty: float
    r_eq: float
    r_bound: float
    steady_rate: float
    dt: float
    dx: float
    max_energy_residual: float


REGIMES = {"stick": 0.2, "slip": 0.05}


def couette_run(N: int, regime: str = "stick", delta: float | None = None, eps: float = 1e-6,
                nu: float = 0.1, U0: float = 1.0, alpha: float = 1.0, courant: float = 0.5,
                steady_tol: float = 1e-10, t_max: float = 400.0, Nq: int | None = None) -> CouetteResult:
    """March the Couette case on an N x N grid (h = 1, L = 1) to steady state.

    The time step is ``courant * dx / U0``; diffusion and friction are
    implicit, so the diffusive part of the CFL check is relaxed through the
    ``cfl`` setting.  Steady state is declared when max |v^(n+1) - v^n| / dt
    drops below ``steady_tol``.
    """
    k = REGIMES[regime]
    if delta is None:
        delta = 0.1 if regime == "stick" else 0.05
    geom = ChannelGeometry(1.0, 1.0, (), (), Nq or N, N)
    grid = build_grid(geom)
    dx = grid.min_spacing
    dt = courant * dx / U0
    cfl = 1.01 * dt / (dx * dx / (4.0 * nu))
    cfg = SolverConfig(nu=nu, dt=dt, cfl=max(cfl, 1.0), picard_max=200, T_end=t_max, snapshot_dt=dt)
    fm = FrictionModel(k, delta, eps)
    xi = build_background(U0, alpha, grid, nu)
    stepper = Stepper(grid, cfg, fm, xi, dt)
    state = State.zeros(grid)
    steps = 0
    rate = math.inf
    F = xi.forcing_bound_F
    e_prev = step_energy(state, fm, grid)
    worst = -math.inf
    while state.t < t_max:
        new, _ = stepper.step(state)
        steps += 1
        e = step_energy(new, fm, grid)
        worst = max(worst, (e[0] - e_prev[0]) / dt + 0.5 * nu * (e[1] + e_prev[1])
                    + (e[2] + e_prev[2]) - F)
        e_prev = e
        rate = float(max(np.max(np.abs(new.v1 - state.v1)), np.max(np.abs(new.v2 - state.v2)))) / dt
        state = new
        if rate <= steady_tol:
            break
    u = xi.U + state.v1
    x2 = grid.x2
    ub_t = tresca_bottom_speed(U0, k, nu, 1.0)
    ub_p = penalty_bottom_speed(U0, fm, nu, 1.0)
    err_t = float(np.max(np.abs(u - ub_t * (1.0 - x2))))
    err_p = float(np.max(np.abs(u - ub_p * (1.0 - x2))))
    slip = state.v1[:, 0]
    r_eq, r_bound = complementarity_residual(fm, slip, wall_traction(state, grid, nu), grid)
    return CouetteResult(N, regime, state.t, steps, float(np.mean(u[:, 0])), err_t, err_p,
                         r_eq, r_bound, rate, dt, dx, worst)


def observed_orders(errors):
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])
