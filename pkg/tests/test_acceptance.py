"""Acceptance suite: one test and one PASS/FAIL line per criterion.

Every tolerance is pinned below.  Runs share module-scoped fixtures; the
energy criterion (3) audits the per-step residual of every run made here.
"""
from __future__ import annotations

import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings

import conftest
from trescaflow.background import build_background
from trescaflow.checkpoint import CheckpointMeta, encode, load_checkpoint, save_checkpoint
from trescaflow.config import parse_config, serialize_config
from trescaflow.diagnostics import (absorbing_check, energy_identity_defect, estimate_ladyzhenskaya,
                                    estimate_poincare)
from trescaflow.dynamics import (StoredRun, contraction_ledger, dimension_estimate, endpoint_lipschitz,
                                 gronwall_exponent, holder_fit, make_segment, time_regularity_monitor,
                                 xl_distance)
from trescaflow.fields import random_admissible
from trescaflow.friction import FrictionModel
from trescaflow.geometry import build_grid
from trescaflow.outputs import verify_manifest, write_outputs
from trescaflow.solver import run
from trescaflow.state import SolverConfig
from trescaflow.validation import couette_run, observed_orders, penalty_bottom_speed
from trescaflow.workflows import build_problem, ensemble_segments, hopf_ladder, initial_state, random_state

from fuzz import config_texts

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "slip_wavy.cfg"

# -- pinned tolerances ----------------------------------------------------------------
STICK_ERR_64 = 1e-3          # 1: max |u - U0 (1 - x2/h)| at 64x64
STICK_ORDER = 1.8            # 1: observed order on 32 -> 64 -> 128
SLIP_SPEED_REL = 0.02        # 2: |u_b - k h / nu| / (k h / nu)
SLIP_COMP = 1e-3             # 2: r_eq, r_bound <= SLIP_COMP * k
C_E = 1.0                    # 3: tol_E = C_E (dt + dx^2)
DEFECT_ORDER = 1.0           # 3: fitted order of the energy-identity defect under dt halving
ABSORB_BAND = 0.05           # 4: margin <= ABSORB_BAND * F / (nu lambda1)
ABSORB_T = 3.0               # 4: horizon
PAIR_GAP = 1e-4              # 5: |w0 - v0|
LEDGER_MAX = 1.0             # 5: worst ratio in the Gronwall ledger
DELTAS = (0.4, 0.2, 0.1, 0.05)  # 6: ladder (each compared with delta / 2)
DELTA_T = 5.0                # 6, 8: horizon
LADY_REL = 0.10              # 7: |c64 - c128| / c128
HOPF_FRACTION = 0.25         # 7: ratio <= HOPF_FRACTION * nu for some alpha
HOLDER_R2 = 0.9              # 8
Y_SPREAD = 2.0               # 8: max_delta sup y <= Y_SPREAD * min_delta sup y
MONITOR_DELTAS = (0.5, 0.25, 0.1)
BOX_FIXED_MAX = 0.2          # 9
CIRCLE_TOL = 0.15            # 9
TORUS_TOL = 0.25             # 9
RESTART_TOL = 1e-12          # 10
FUZZ_CONFIGS = 100           # 10

DT = 2e-3                    # solver step of the dynamics runs
SAMPLE = 0.02                # snapshot cadence of the dynamics runs

RESIDUALS: dict = {}         # run label -> (max per-step residual, tol_E)


def report(n: int, ok: bool, detail: str):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}; {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def audit(label, summary, grid):
    RESIDUALS[label] = (float(np.max(summary.step_residuals)) if summary.step_residuals.size else -math.inf,
                        C_E * (summary.dt + grid.min_spacing ** 2))


@pytest.fixture(scope="module")
def acc():
    cfg = parse_config(CONFIG.read_text())
    pb = build_problem(cfg)
    lam = estimate_poincare(pb.grid)
    F = pb.xi.forcing_bound_F
    rho = math.sqrt(2 * F / (cfg.nu * lam))
    return cfg, pb, lam, F, rho


def _dyn_cfg(cfg, T):
    return SolverConfig(nu=cfg.nu, dt=DT, T_end=T, snapshot_dt=SAMPLE)


# -- 1, 2: Couette ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def couette():
    out = {("stick", n): couette_run(n, "stick") for n in (32, 64, 128)}
    out[("slip", 64)] = couette_run(64, "slip")
    for (regime, n), r in out.items():
        RESIDUALS[f"couette-{regime}-{n}"] = (r.max_energy_residual, C_E * (r.dt + r.dx ** 2))
    return out


def test_criterion_1_couette_stick(couette):
    runs = [couette[("stick", n)] for n in (32, 64, 128)]
    orders = observed_orders([r.err_penalty for r in runs])
    literal = observed_orders([r.err_tresca for r in runs])
    err64 = runs[1].err_tresca
    ok = err64 <= STICK_ERR_64 and bool(np.all(orders >= STICK_ORDER))
    report(1, ok, f"err64={err64:.3e} (<= {STICK_ERR_64:g}); orders vs regularized closed form "
                  f"{orders[0]:.2f}, {orders[1]:.2f} (>= {STICK_ORDER}); orders vs U0(1-x2/h) "
                  f"{literal[0]:.2f}, {literal[1]:.2f} (saturated by the penalty slip)")


def test_criterion_2_couette_slip(couette):
    r = couette[("slip", 64)]
    k, nu = 0.05, 0.1
    target = k * 1.0 / nu
    rel = abs(r.bottom_speed - target) / target
    theory = penalty_bottom_speed(1.0, FrictionModel(k, 0.05, 1e-6), nu, 1.0)
    ok = rel <= SLIP_SPEED_REL and r.r_eq <= SLIP_COMP * k and r.r_bound <= SLIP_COMP * k
    report(2, ok, f"u_b={r.bottom_speed:.5f} vs {target} (rel {rel:.3%}, <= {SLIP_SPEED_REL:.0%}); "
                  f"r_eq={r.r_eq:.2e}, r_bound={r.r_bound:.2e} (<= {SLIP_COMP * k:.0e}); "
                  f"penalty closed form at delta=0.05 gives u_b={theory:.5f}")


# -- 4: absorbing ball ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def absorbing(acc):
    cfg, pb, lam, F, rho = acc
    scfg = SolverConfig(nu=cfg.nu, dt=None, cfl=1.0, T_end=ABSORB_T, snapshot_dt=0.01)
    out = []
    for i, amp in enumerate(np.linspace(1.0, 10.0, 10) * rho):
        v0 = random_state(pb.grid, np.random.default_rng([cfg.seed, 100 + i]), amp)
        s = run(v0, scfg, pb.fm, pb.xi, pb.grid, keep_snapshots=False)
        audit(f"absorbing-{i}", s, pb.grid)
        out.append((amp, absorbing_check(s.records, lam, F, cfg.nu)))
    return out


def test_criterion_4_absorbing_ball(acc, absorbing):
    cfg, pb, lam, F, rho = acc
    band = ABSORB_BAND * F / (cfg.nu * lam)
    worst = max(rep.margin for _, rep in absorbing)
    entries = [rep.entry_time for _, rep in absorbing]
    ok = worst <= band and all(math.isfinite(t) for t in entries)
    report(4, ok, f"lambda1={lam:.4f}, F={F:.4f}, rho={rho:.4f}; worst margin {worst:.3e} (<= {band:.3e}); "
                  f"entry times {', '.join(f'{t:.2f}' for t in entries)}")


# -- 5: contraction ledger ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def pairs(acc):
    cfg, pb, lam, F, rho = acc
    scfg = _dyn_cfg(cfg, 2.0)
    out = []
    for i in range(5):
        v0 = random_state(pb.grid, np.random.default_rng([cfg.seed, 200 + i]), rho)
        d = random_state(pb.grid, np.random.default_rng([cfg.seed, 300 + i]), PAIR_GAP)
        w0 = v0.replace(v1=v0.v1 + d.v1, v2=v0.v2 + d.v2)
        sv = run(v0, scfg, pb.fm, pb.xi, pb.grid)
        sw = run(w0, scfg, pb.fm, pb.xi, pb.grid)
        audit(f"pair-{i}-v", sv, pb.grid)
        audit(f"pair-{i}-w", sw, pb.grid)
        out.append((StoredRun.from_summary(sw, pb.grid), StoredRun.from_summary(sv, pb.grid)))
    return out


def test_criterion_5_contraction(acc, pairs):
    cfg, pb, *_ = acc
    c = estimate_ladyzhenskaya(pb.grid, 1000, cfg.seed)
    ratios, factors, gaps, integrals = [], [], [], []
    for rw, rv in pairs:
        gaps.append(math.sqrt(float(np.sum(pb.grid.mass * ((rw.v1[0] - rv.v1[0]) ** 2
                                                             + (rw.v2[0] - rv.v2[0]) ** 2)))))
        led = contraction_ledger(rw, rv, c, cfg.nu)
        ratios.append(led.worst_ratio)
        integrals.append(float(gronwall_exponent(rw, c, cfg.nu)[-1]) * cfg.nu / (2 * c ** 4))
        factors.append(endpoint_lipschitz(make_segment(rw, 1.0, 1.0), make_segment(rv, 1.0, 1.0)))
    ok = (max(ratios) <= LEDGER_MAX and all(math.isfinite(f) for f in factors)
          and all(abs(g - PAIR_GAP) <= 1e-3 * PAIR_GAP for g in gaps))
    report(5, ok, f"c_lady={c:.4f}; |w0-v0| in [{min(gaps):.4e}, {max(gaps):.4e}]; worst ledger ratio "
                  f"{max(ratios):.3e} (<= {LEDGER_MAX}); int ||w||^2 in [{min(integrals):.3f}, "
                  f"{max(integrals):.3f}]; endpoint factors {', '.join(f'{f:.3f}' for f in factors)}")


# -- 6, 8: delta ladder -----------------------------------------------------------------------------

@pytest.fixture(scope="module")
def delta_runs(acc):
    cfg, pb, *_ = acc
    scfg = _dyn_cfg(cfg, DELTA_T)
    v0 = initial_state(cfg, pb.grid)
    out = {}
    for d in sorted(set(DELTAS) | {x / 2 for x in DELTAS} | set(MONITOR_DELTAS), reverse=True):
        fm = FrictionModel(cfg.k, d, cfg.eps_floor)
        s = run(v0, scfg, fm, pb.xi, pb.grid)
        audit(f"delta-{d}", s, pb.grid)
        out[d] = (StoredRun.from_summary(s, pb.grid), fm)
    return out


def test_criterion_6_delta_convergence(delta_runs):
    diffs = []
    for d in DELTAS:
        a, b = delta_runs[d][0], delta_runs[d / 2][0]
        diffs.append(xl_distance(make_segment(a, 0.0, DELTA_T), make_segment(b, 0.0, DELTA_T)))
    ok = all(y < x for x, y in zip(diffs, diffs[1:]))
    report(6, ok, "||v_d - v_d/2|| over [0, 5]: " + ", ".join(
        f"d={d}: {x:.4e}" for d, x in zip(DELTAS, diffs)) + " (strictly decreasing)")


def test_criterion_8_holder_and_monitor(acc, delta_runs):
    cfg, pb, *_ = acc
    slip_run, _ = delta_runs[cfg.delta]
    chi = make_segment(slip_run, 2.0, 1.0)
    fit = holder_fit(chi, np.round(np.arange(11) * SAMPLE, 10))
    sup_y = {}
    for d in MONITOR_DELTAS:
        r, fm = delta_runs[d]
        sup_y[d] = time_regularity_monitor(r, fm, cfg.nu, eta=cfg.eta).max_on_window
    vals = np.array(list(sup_y.values()))
    ok = (0 < fit.beta <= 1 and fit.r2 >= HOLDER_R2 and not fit.degenerate
          and bool(np.all(np.isfinite(vals))) and vals.max() <= Y_SPREAD * vals.min())
    report(8, ok, f"beta={fit.beta:.3f}, r2={fit.r2:.4f} (>= {HOLDER_R2}), c={fit.c:.3e}; sup y on [0.5, 5]: "
                  + ", ".join(f"d={d}: {y:.4f}" for d, y in sup_y.items())
                  + f" (max/min {vals.max() / vals.min():.3f} <= {Y_SPREAD})")


# -- 7: constants -------------------------------------------------------------------------------------

def test_criterion_7_constants(acc):
    cfg, *_ = acc
    cs = {}
    for n in (64, 128):
        grid = build_grid(replace(cfg, Nq=n, Ns=n).geometry())
        cs[n] = estimate_ladyzhenskaya(grid, 1000, cfg.seed)
        if n == 64:
            ladder = hopf_ladder(cfg, grid, 100)
    rel = abs(cs[64] - cs[128]) / cs[128]
    bound = HOPF_FRACTION * cfg.nu
    best = min((r for _, r, _ in ladder if math.isfinite(r)), default=math.inf)
    ok = rel <= LADY_REL and best <= bound
    report(7, ok, f"c_lady 64: {cs[64]:.4f}, 128: {cs[128]:.4f} (rel {rel:.2%} <= {LADY_REL:.0%}); "
                  "hopf ratio by alpha: " + ", ".join(f"{a}: {r:.3e}" for a, r, _ in ladder)
                  + f" (some <= {bound:g})")


# -- 9: dimension estimator ---------------------------------------------------------------------------

def _injected(grid, coords, seed=0):
    rng = np.random.default_rng(seed)
    basis = [random_admissible(grid, rng) for _ in range(coords.shape[1])]
    segs = []
    for c in coords:
        v1 = sum(a * b[0] for a, b in zip(c, basis))
        v2 = sum(a * b[1] for a, b in zip(c, basis))
        r = StoredRun.from_arrays(grid, [0.0, 0.1], np.stack([v1, v1]), np.stack([v2, v2]))
        segs.append(make_segment(r, 0.0, 0.1))
    return segs


def test_criterion_9_dimension(acc):
    cfg, pb, lam, F, rho = acc
    # laminar regime: the stick wall drives a steady flow
    lam_cfg = replace(cfg, k=0.2, dt=0.005, T_end=0.0, init_amplitude=rho)
    segs, runs = ensemble_segments(lam_cfg, ensemble=5, burn_in=15.0)
    fixed = dimension_estimate(segs, m=8)
    rng = np.random.default_rng(2024)
    th = rng.uniform(0, 2 * np.pi, 2000)
    circle = dimension_estimate(_injected(pb.grid, np.column_stack([np.cos(th), np.sin(th)])), m=8)
    a, b = rng.uniform(0, 2 * np.pi, (2, 2000))
    torus = dimension_estimate(_injected(pb.grid, np.column_stack(
        [np.cos(a), np.sin(a), np.cos(b), np.sin(b)]), seed=1), m=8)
    ok = (fixed.box_dim <= BOX_FIXED_MAX and abs(circle.corr_dim - 1.0) <= CIRCLE_TOL
          and abs(torus.corr_dim - 2.0) <= TORUS_TOL)
    report(9, ok, f"laminar box slope {fixed.box_dim:.3f} (<= {BOX_FIXED_MAX}); circle corr dim "
                  f"{circle.corr_dim:.3f} (1 +/- {CIRCLE_TOL}); torus corr dim {torus.corr_dim:.3f} "
                  f"(2 +/- {TORUS_TOL})")


# -- 10: infrastructure --------------------------------------------------------------------------------

def test_criterion_10_infrastructure(acc, tmp_path):
    cfg, pb, *_ = acc
    scfg = _dyn_cfg(cfg, 0.4)
    meta = CheckpointMeta(cfg.L, cfg.nu, cfg.k, cfg.delta, cfg.eps_floor, cfg.U0, cfg.alpha, DT)
    v0 = initial_state(cfg, pb.grid)
    full = run(v0, scfg, pb.fm, pb.xi, pb.grid)
    half = run(v0, scfg, pb.fm, pb.xi, pb.grid, t_end=0.2)
    audit("restart-full", full, pb.grid)

    path = tmp_path / "half.tcf"
    save_checkpoint(path, half.final, meta)
    back, m = load_checkpoint(path, pb.grid.shape)
    bit_exact = (path.read_bytes() == encode(back, m)
                 and all(a.tobytes() == b.tobytes() for a, b in
                         ((back.v1, half.final.v1), (back.v2, half.final.v2), (back.p, half.final.p)))
                 and back.t == half.final.t)

    cont = run(back, scfg, pb.fm, pb.xi, pb.grid, dt=m.dt)
    restart_err = max(float(np.max(np.abs(a - b))) for a, b in
                      ((cont.final.v1, full.final.v1), (cont.final.v2, full.final.v2),
                       (cont.final.p, full.final.p)))

    seen = []

    @settings(max_examples=FUZZ_CONFIGS, derandomize=True, database=None)
    @given(text=config_texts())
    def roundtrip(text):
        a = parse_config(text)
        assert parse_config(serialize_config(a)) == a
        seen.append(1)

    try:
        roundtrip()
        fuzz_ok = len(seen) >= FUZZ_CONFIGS
    except Exception:  # noqa: BLE001, any falsifying example fails the criterion
        fuzz_ok = False

    out = tmp_path / "out"
    write_outputs(full, out, pb.grid, pb.fm, cfg.nu, cfg.as_dict(), cfg.digest(), meta,
                  wall_times=full.wall_times)
    detected = clean = 0
    names = sorted(p.name for p in out.iterdir() if p.name != "manifest.json")
    for name in names:
        p = out / name
        blob = bytearray(p.read_bytes())
        blob[len(blob) // 3] ^= 0x20
        p.write_bytes(bytes(blob))
        detected += any(name in q for q in verify_manifest(out))
        blob[len(blob) // 3] ^= 0x20
        p.write_bytes(bytes(blob))
        clean += verify_manifest(out) == []
    ok = bit_exact and restart_err <= RESTART_TOL and fuzz_ok and detected == clean == len(names)
    report(10, ok, f"checkpoint bit-exact: {bit_exact}; restart max diff {restart_err:.1e} (<= {RESTART_TOL:g}); "
                   f"config round trips {len(seen)}/{FUZZ_CONFIGS}: {fuzz_ok}; corruption detected in "
                   f"{detected}/{len(names)} files")


# -- 3: energy inequality (audits every run above) ---------------------------------------------------------

def test_criterion_3_energy(acc, couette, absorbing, pairs, delta_runs):
    cfg, pb, lam, F, rho = acc
    # dt-halving ladder for the defect of the discrete energy identity
    v0 = random_state(pb.grid, np.random.default_rng([cfg.seed, 400]), rho)
    dts = (4e-3, 2e-3, 1e-3, 5e-4)
    defects = []
    for dt in dts:
        scfg = SolverConfig(nu=cfg.nu, dt=dt, T_end=0.2, snapshot_dt=dt)
        s = run(v0, scfg, pb.fm, pb.xi, pb.grid)
        audit(f"halving-{dt}", s, pb.grid)
        defects.append(max(abs(energy_identity_defect(a, b, dt, pb.fm, pb.xi, pb.grid, cfg.nu))
                           for a, b in zip(s.snapshots, s.snapshots[1:])))
    order = float(np.polyfit(np.log(dts), np.log(defects), 1)[0])
    bad = {k: v for k, v in RESIDUALS.items() if not v[0] <= v[1]}
    worst = max(RESIDUALS.items(), key=lambda kv: kv[1][0] - kv[1][1])
    ok = not bad and order >= DEFECT_ORDER
    report(3, ok, f"{len(RESIDUALS)} runs audited, {len(bad)} with R > tol_E = {C_E:g}(dt + dx^2); closest "
                  f"{worst[0]}: max R {worst[1][0]:.3e} vs tol {worst[1][1]:.3e}; identity defect "
                  + ", ".join(f"{d:.3e}" for d in defects) + f" under dt halving, order {order:.2f} "
                  f"(>= {DEFECT_ORDER})")
