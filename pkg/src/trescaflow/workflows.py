"""Config-driven building blocks shared by the CLI and the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .background import BackgroundFlow, build_background, hopf_ratio_estimate
from .config import RunConfig
from .diagnostics import ConstantsEstimate, compute_norms, estimate_ladyzhenskaya, estimate_poincare
from .dynamics import StoredRun, dimension_estimate, make_segment, xl_distance
from .fields import random_admissible
from .friction import FrictionModel
from .geometry import MappedGrid, build_grid
from .solver import RunSummary, run
from .state import SolverConfig, State

ALPHA_LADDER = (0.5, 0.25, 0.125, 0.0625)


@dataclass(frozen=True)
class Problem:
    grid: MappedGrid
    xi: BackgroundFlow
    fm: FrictionModel
    solver: SolverConfig


def build_problem(cfg: RunConfig) -> Problem:
    grid = build_grid(cfg.geometry())
    return Problem(grid, build_background(cfg.U0, cfg.alpha, grid, cfg.nu), cfg.friction(), cfg.solver())


def random_state(grid: MappedGrid, rng: np.random.Generator, h_norm: float) -> State:
    """A random admissible field scaled to |v| = h_norm."""
    v1, v2 = random_admissible(grid, rng)
    if h_norm == 0:
        return State.zeros(grid)
    s = h_norm / compute_norms((v1, v2), grid)[0] ** 0.5
    return State(v1 * s, v2 * s, np.zeros(grid.shape))


def initial_state(cfg: RunConfig, grid: MappedGrid, member: int = 0) -> State:
    rng = np.random.default_rng([cfg.seed, member])
    return random_state(grid, rng, cfg.init_amplitude)


def simulate(cfg: RunConfig, problem: Problem | None = None, v0: State | None = None,
             member: int = 0, **kw) -> RunSummary:
    pb = problem or build_problem(cfg)
    if v0 is None:
        v0 = initial_state(cfg, pb.grid, member)
    return run(v0, pb.solver, pb.fm, pb.xi, pb.grid, **kw)


def hopf_ladder(cfg: RunConfig, grid: MappedGrid, n_samples: int = 100):
    """Rows (alpha, hopf_ratio, F) for the alpha ladder; under-resolved rungs give NaN."""
    rows = []
    for a in ALPHA_LADDER:
        try:
            xi = build_background(cfg.U0, a, grid, cfg.nu)
        except ValueError:
            rows.append((a, float("nan"), float("nan")))
            continue
        rows.append((a, hopf_ratio_estimate(xi, grid, n_samples, cfg.seed), xi.forcing_bound_F))
    return rows


def constants(cfg: RunConfig, n_hopf: int = 100, n_lady: int = 1000):
    pb = build_problem(cfg)
    lam = estimate_poincare(pb.grid)
    c = estimate_ladyzhenskaya(pb.grid, n_lady, cfg.seed)
    hr = hopf_ratio_estimate(pb.xi, pb.grid, n_hopf, cfg.seed)
    return ConstantsEstimate(lam, c, hr, pb.xi.forcing_bound_F), hopf_ladder(cfg, pb.grid, n_hopf)


def _analysis_config(cfg: RunConfig) -> SolverConfig:
    s = cfg.solver()
    return SolverConfig(nu=s.nu, dt=s.dt, cfl=s.cfl, proj_tol=s.proj_tol, picard_tol=s.picard_tol,
                        picard_max=s.picard_max, T_end=s.T_end, snapshot_dt=cfg.dt_sample)


def stored_run(cfg: RunConfig, problem: Problem | None = None, member: int = 0,
               v0: State | None = None, t_end: float | None = None) -> StoredRun:
    """Simulate with snapshots every dt_sample and wrap the result for window analysis."""
    pb = problem or build_problem(cfg)
    scfg = _analysis_config(cfg)
    if v0 is None:
        v0 = initial_state(cfg, pb.grid, member)
    if t_end is not None:
        t_end = _round_to(t_end, cfg.dt_sample)
    summary = run(v0, scfg, pb.fm, pb.xi, pb.grid, t_end=t_end)
    return StoredRun.from_summary(summary, pb.grid)


def trajectory_distances(cfg: RunConfig, shifts):
    """Pairwise X_l distances between windows of one run starting at burn_in + shift."""
    sr = stored_run(cfg, t_end=max(cfg.T_end, cfg.burn_in + max(shifts) + cfg.l))
    base = make_segment(sr, cfg.burn_in, cfg.l)
    segs = [make_segment(sr, base.t0 + s, cfg.l) for s in shifts]
    rows = []
    for i, a in enumerate(segs):
        for j, b in enumerate(segs):
            if j > i:
                rows.append((shifts[i], shifts[j], xl_distance(a, b)))
    return rows


def ensemble_segments(cfg: RunConfig, ensemble: int | None = None, burn_in: float | None = None,
                      min_segments: int = 50):
    """Post-burn-in windows from an ensemble of random initial conditions.

    Windows start every dt_sample after the burn-in; runs are extended as
    needed so the ensemble yields at least ``min_segments`` windows.
    """
    pb = build_problem(cfg)
    n = ensemble or cfg.ensemble
    t_burn = cfg.burn_in if burn_in is None else burn_in
    per_run = -(-min_segments // n)
    t_end = t_burn + cfg.l + (per_run - 1) * cfg.dt_sample
    t_end = max(t_end, cfg.T_end)
    scfg = _analysis_config(cfg)
    segments, runs = [], []
    for member in range(n):
        summary = run(initial_state(cfg, pb.grid, member), scfg, pb.fm, pb.xi, pb.grid,
                      t_end=_round_to(t_end, cfg.dt_sample))
        sr = StoredRun.from_summary(summary, pb.grid)
        runs.append(sr)
        for j in range(per_run):
            segments.append(make_segment(sr, t_burn + j * cfg.dt_sample, cfg.l))
    return segments, runs


def _round_to(t, step):
    return round(t / step) * step


def dimension(cfg: RunConfig, m: int = 8, eps=None, ensemble: int | None = None,
              burn_in: float | None = None):
    segments, runs = ensemble_segments(cfg, ensemble, burn_in)
    return dimension_estimate(segments, m, eps)
