"""IMEX time stepping for the penalty-regularized friction problem.

One step advances the perturbation velocity ``v`` (physical velocity minus
the background shear layer):

* advection by ``xi + v`` (skew form) and the background coupling terms are
  explicit, two-step Adams-Bashforth (forward Euler on the first step);
* diffusion is Crank-Nicolson with the Q1 stiffness;
* the wall law ``nu dv1/dx2 = g(v1)`` on the bottom enters as a boundary
  term ``dq * g(w)``, treated implicitly by lagged-coefficient Picard
  iteration on the bottom trace only (Woodbury reduction of the v1 solve);
* an incremental pressure-correction projection restores the constraint.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .background import BackgroundFlow
from .friction import FrictionModel, j_delta
from .geometry import MappedGrid, integrate_domain
from .operators import a_form, b_form, discretization, grad_x, transport_skew, trapezoid_weights
from .projection import mean_free, pressure_solver
from .state import SolverConfig, State

log = logging.getLogger(__name__)


class CFLError(RuntimeError):
    pass


class PicardError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


class StepError(RuntimeError):
    def __init__(self, msg, t):
        super().__init__(msg)
        self.t = t


# -- weak-form pieces ---------------------------------------------------------

def forcing_term(v, xi: BackgroundFlow, nu: float, grid: MappedGrid, transport: bool = True):
    """Pointwise background coupling G(v) on the nodes.

    ``G1 = -U dv1/dx1 - v2 U' + nu U''`` and ``G2 = -U dv2/dx1``.  With
    ``transport=False`` the ``-U dv/dx1`` part is dropped; the stepper uses
    that variant because it folds transport by U into the skew-symmetric
    advection by ``xi + v``.
    """
    v1, v2 = v
    g1 = -v2 * xi.dU + nu * xi.d2U
    g2 = np.zeros(grid.shape)
    if transport:
        g1 = g1 - xi.U * grad_x(v1, grid)[0]
        g2 = g2 - xi.U * grad_x(v2, grid)[0]
    return g1, g2


def forcing_pairing(v, theta, xi, nu, grid) -> float:
    """(G(v), theta) by nodal quadrature."""
    g1, g2 = forcing_term(v, xi, nu, grid)
    return integrate_domain(grid, g1 * theta[0] + g2 * theta[1])


def l_functional(v, theta, xi: BackgroundFlow, nu: float, grid: MappedGrid) -> float:
    """-nu a(xi, theta) - b(xi, v, theta) - b(v, xi, theta)."""
    zero = np.zeros(grid.shape)
    xv = (np.array(xi.U), zero)
    return (-nu * a_form(xv, theta, grid)
            - b_form(xv, v, theta, grid)
            - integrate_domain(grid, v[1] * xi.dU * theta[0]))


def max_speed(v1, v2, xi: BackgroundFlow) -> float:
    return float(np.sqrt(np.max((xi.U + v1) ** 2 + v2 ** 2)))


def cfl_limit(grid: MappedGrid, nu: float, umax: float) -> float:
    dx = grid.min_spacing
    adv = dx / umax if umax > 0 else math.inf
    return min(adv, dx * dx / (4.0 * nu))


def choose_dt(cfg: SolverConfig, grid: MappedGrid, xi: BackgroundFlow, v1, v2) -> float:
    """cfg.dt if given, else half the CFL bound, trimmed to divide snapshot_dt."""
    if cfg.dt is not None:
        return float(cfg.dt)
    dt = 0.5 * cfg.cfl * cfl_limit(grid, cfg.nu, max_speed(v1, v2, xi))
    m = math.ceil(cfg.snapshot_dt / dt - 1e-9)
    return cfg.snapshot_dt / m


@dataclass
class StepInfo:
    picard_iters: int
    picard_changes: list
    proj_residual: float


_ANDERSON_DEPTH = 5


def _anderson(ws, rs):
    """Anderson (type II) extrapolation from images ws and residuals rs."""
    if len(rs) == 1:
        return ws[0]
    dr = np.stack([rs[i + 1] - rs[i] for i in range(len(rs) - 1)], axis=1)
    dw = np.stack([ws[i + 1] - ws[i] for i in range(len(ws) - 1)], axis=1)
    gamma, *_ = np.linalg.lstsq(dr, rs[-1], rcond=None)
    return ws[-1] - dw @ gamma


class Stepper:
    """Factorized operators for one (grid, nu, dt, friction, background) set."""

    def __init__(self, grid: MappedGrid, cfg: SolverConfig, fm: FrictionModel,
                 xi: BackgroundFlow, dt: float):
        self.grid, self.cfg, self.fm, self.xi, self.dt = grid, cfg, fm, xi, float(dt)
        d = self.disc = discretization(grid)
        nu = cfg.nu
        half = 0.5 * self.dt * nu
        self.lu1 = splu((sp.diags(d.mass1) + half * d.K11).tocsc())
        self.lu2 = splu((sp.diags(d.mass2) + half * d.K22).tocsc())
        E = np.zeros((d.n1, grid.Nq))
        E[d.bottom, np.arange(grid.Nq)] = 1.0
        self.Z = self.lu1.solve(E)
        self.S = self.Z[d.bottom, :]
        self.pressure = pressure_solver(grid)
        self.W = trapezoid_weights(grid)
        self.const1 = (grid.mass * nu * xi.d2U).ravel()[d.idx1]
        self.picard_violations = 0

    def explicit(self, v1, v2) -> np.ndarray:
        """Explicit weak right-hand side on the free DOFs."""
        d, g, xi = self.disc, self.grid, self.xi
        a = (xi.U + v1, v2)
        r1 = -self.W * transport_skew(a, v1, g) - g.mass * v2 * xi.dU
        r2 = -self.W * transport_skew(a, v2, g)
        return np.concatenate([r1.ravel()[d.idx1] + self.const1, r2.ravel()[d.idx2]])

    def check_cfl(self, state: State):
        umax = max_speed(state.v1, state.v2, self.xi)
        lim = self.cfg.cfl * cfl_limit(self.grid, self.cfg.nu, umax)
        if self.dt > lim * (1 + 1e-12):
            raise CFLError(f"CFL violated at t={state.t:.6g}: dt={self.dt:.4g} > {lim:.4g} (|u|max={umax:.4g})")

    def step(self, state: State) -> tuple[State, StepInfo]:
        self.check_cfl(state)
        d, g, dt, nu, fm = self.disc, self.grid, self.dt, self.cfg.nu, self.fm
        x = d.pack(state.v1, state.v2)
        x1, x2 = x[:d.n1], x[d.n1:]
        nx = self.explicit(state.v1, state.v2)
        ext = nx if state.history is None else 1.5 * nx - 0.5 * state.history
        gp = d.D.T @ state.p.ravel()
        rhs1 = d.mass1 * x1 - 0.5 * dt * nu * (d.K11 @ x1) + dt * (ext[:d.n1] + gp[:d.n1])
        rhs2 = d.mass2 * x2 - 0.5 * dt * nu * (d.K22 @ x2) + dt * (ext[d.n1:] + gp[d.n1:])
        y1 = self.lu1.solve(rhs1)
        y2 = self.lu2.solve(rhs2)

        # friction: (I + S C(w_old)) w_new = y_b on the bottom trace
        yb = y1[d.bottom]
        w = x1[d.bottom].copy()
        scale = dt * g.dq
        changes = []
        eye = np.eye(g.Nq)
        # Anderson mixing over the lagged-coefficient map: the plain map
        # converges linearly with a rate that degrades on a stiff wall.
        hist_w, hist_r = [], []
        for it in range(1, self.cfg.picard_max + 1):
            c = scale * fm.coefficient(w)
            tw = np.linalg.solve(eye + self.S * c[None, :], yb)
            r = tw - w
            changes.append(float(np.max(np.abs(r))))
            if changes[-1] <= self.cfg.picard_tol:
                w = tw
                break
            if len(changes) > 1 and changes[-1] > changes[-2]:
                # mixing overshot: restart the history from this point
                hist_w.clear()
                hist_r.clear()
            hist_w.append(tw)
            hist_r.append(r)
            if len(hist_r) > _ANDERSON_DEPTH + 1:
                hist_w.pop(0)
                hist_r.pop(0)
            w = _anderson(hist_w, hist_r)
        else:
            raise PicardError(f"friction iteration stalled at t={state.t:.6g}: last change {changes[-1]:.3e}",
                              changes[-1])
        if any(b > a for a, b in zip(changes, changes[1:])):
            self.picard_violations += 1
            log.debug("non-monotone friction iteration at t=%.6g", state.t)
        y1 = y1 - self.Z @ (c * w)

        # projection
        xs = np.concatenate([y1, y2])
        phi, res, _ = self.pressure.solve(-(d.D @ xs), self.cfg.proj_tol)
        xs = xs + d.minv * (d.D.T @ phi)
        v1, v2 = d.unpack(xs)
        p = mean_free(state.p + phi.reshape(g.shape) / dt, g)
        new = State(v1, v2, p, state.t + dt, nx)
        return new, StepInfo(it, changes, res)


# -- run loop -----------------------------------------------------------------

@dataclass
class RunSummary:
    config: SolverConfig
    dt: float
    snapshots: list = field(default_factory=list)
    records: list = field(default_factory=list)
    step_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    picard_iters_max: int = 0
    picard_violations: int = 0
    final: State | None = None
    wall_times: tuple = (0.0, 0.0)

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])


def ingest(v0: State, grid: MappedGrid, proj_tol: float) -> State:
    from .projection import project_velocity

    v1, v2, _ = project_velocity(v0.v1, v0.v2, grid, proj_tol)
    p = np.zeros(grid.shape) if v0.p is None else mean_free(v0.p, grid)
    return State(v1, v2, p, float(v0.t), v0.history)


def run(v0: State, cfg: SolverConfig, fm: FrictionModel, xi: BackgroundFlow, grid: MappedGrid,
        sinks=(), t_end: float | None = None, dt: float | None = None, project_initial: bool = True,
        keep_snapshots: bool = True) -> RunSummary:
    """Advance from v0 to ``t_end`` (default cfg.T_end), recording at snapshot_dt.

    Each sink is called with ``(state, record)`` at every snapshot.  A state
    that already carries Adams-Bashforth history (a restart) is not
    re-projected, so restarts reproduce the uninterrupted run.
    """
    from .diagnostics import energy_record, step_energy

    t_end = cfg.T_end if t_end is None else float(t_end)
    state = v0
    if project_initial and v0.history is None:
        state = ingest(v0, grid, cfg.proj_tol)
    if dt is None:
        dt = choose_dt(cfg, grid, xi, state.v1, state.v2)
    every = round(cfg.snapshot_dt / dt)
    if every < 1 or abs(every * dt - cfg.snapshot_dt) > 1e-9 * cfg.snapshot_dt:
        raise ValueError(f"snapshot_dt={cfg.snapshot_dt} is not a multiple of dt={dt}")
    n_steps = round((t_end - state.t) / dt)
    if n_steps < 0 or abs(state.t + n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError(f"T_end={t_end} is not reachable from t={state.t} in steps of dt={dt}")
    summary = RunSummary(cfg, dt)
    wall0 = time.time()
    F = xi.forcing_bound_F
    stepper = Stepper(grid, cfg, fm, xi, dt) if n_steps else None
    t0 = state.t

    def emit(st, rec):
        if keep_snapshots:
            summary.snapshots.append(st)
        summary.records.append(rec)
        for sink in sinks:
            sink(st, rec)

    prev_e = step_energy(state, fm, grid)
    emit(state, energy_record(state, fm, xi, grid, cfg.nu))
    residuals = np.empty(n_steps)
    for n in range(1, n_steps + 1):
        try:
            new, info = stepper.step(state)
        except (CFLError, PicardError, RuntimeError) as exc:
            raise StepError(f"{exc} (t={state.t:.6g})", state.t) from exc
        new = new.replace(t=t0 + n * dt)
        e = step_energy(new, fm, grid)
        residuals[n - 1] = ((e[0] - prev_e[0]) / dt + 0.5 * cfg.nu * (e[1] + prev_e[1])
                            + (e[2] + prev_e[2]) - F)
        summary.picard_iters_max = max(summary.picard_iters_max, info.picard_iters)
        prev_e = e
        state = new
        if n % every == 0:
            emit(state, energy_record(state, fm, xi, grid, cfg.nu,
                                      float(np.max(residuals[n - every:n]))))
    summary.step_residuals = residuals
    summary.picard_violations = stepper.picard_violations if stepper else 0
    if summary.picard_violations:
        log.warning("friction iteration was non-monotone in %d of %d steps",
                    summary.picard_violations, n_steps)
    if n_steps >= 20 and summary.picard_violations > n_steps // 2:
        raise StepError("friction iteration persistently non-monotone", state.t)
    summary.final = state
    summary.wall_times = (wall0, time.time())
    return summary
