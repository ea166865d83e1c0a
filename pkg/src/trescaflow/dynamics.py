"""Trajectory windows, their distances and shifts, regularity monitors and
dimension estimates for sampled attractors.

A :class:`StoredRun` holds uniformly sampled velocity snapshots of one
trajectory.  A :class:`TrajectorySegment` is a window of length ``l`` over a
stored run (a view, never a re-simulation); the distance between segments is
the L2-in-time norm of the L2-in-space difference, with the trapezoid rule in
both.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .friction import FrictionModel, j_delta
from .geometry import MappedGrid
from .operators import a_form


class WindowError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class StoredRun:
    grid: MappedGrid
    times: np.ndarray
    v1: np.ndarray  # (n, Nq, Ns + 1)
    v2: np.ndarray
    dt_sample: float
    dt_solver: float | None = None

    @classmethod
    def from_summary(cls, summary, grid: MappedGrid) -> "StoredRun":
        snaps = summary.snapshots
        times = np.array([s.t for s in snaps])
        v1 = np.stack([s.v1 for s in snaps])
        v2 = np.stack([s.v2 for s in snaps])
        return cls(grid, times, v1, v2, summary.config.snapshot_dt, summary.dt)

    @classmethod
    def from_arrays(cls, grid, times, v1, v2, dt_solver=None) -> "StoredRun":
        times = np.asarray(times, dtype=float)
        dts = np.diff(times)
        if dts.size and np.max(np.abs(dts - dts[0])) > 1e-9 * dts[0]:
            raise WindowError("stored samples must be uniform in time")
        return cls(grid, times, np.asarray(v1, float), np.asarray(v2, float),
                   float(dts[0]) if dts.size else 0.0, dt_solver)

    def __len__(self):
        return self.times.size

    def index_of(self, t: float) -> int:
        k = (t - self.times[0]) / self.dt_sample
        i = int(round(k))
        if abs(k - i) > 1e-6 or i < 0 or i >= len(self):
            raise WindowError(f"t={t} is not a stored sample time")
        return i

    def segment(self, t0: float, l: float) -> "TrajectorySegment":
        return make_segment(self, t0, l)

    def h_norm_sq(self) -> np.ndarray:
        m = self.grid.mass
        return np.einsum("ijk,jk->i", self.v1 ** 2 + self.v2 ** 2, m)

    def v_norm_sq(self) -> np.ndarray:
        return np.array([a_form((a, b), (a, b), self.grid) for a, b in zip(self.v1, self.v2)])


@dataclass(frozen=True, eq=False)
class TrajectorySegment:
    source: StoredRun
    t0: float
    l: float
    start: int
    count: int

    @property
    def dt_sample(self) -> float:
        return self.source.dt_sample

    @property
    def grid(self) -> MappedGrid:
        return self.source.grid

    @property
    def v1(self) -> np.ndarray:
        return self.source.v1[self.start:self.start + self.count]

    @property
    def v2(self) -> np.ndarray:
        return self.source.v2[self.start:self.start + self.count]

    @property
    def times(self) -> np.ndarray:
        return self.source.times[self.start:self.start + self.count]


def make_segment(run: StoredRun, t0: float, l: float) -> TrajectorySegment:
    if run.dt_sample <= 0:
        raise WindowError("run has a single sample")
    n = l / run.dt_sample
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise WindowError(f"dt_sample={run.dt_sample} does not divide l={l}")
    count = int(round(n)) + 1
    k = (t0 - run.times[0]) / run.dt_sample
    start = int(round(k))
    if abs(k - start) > 1e-6:
        raise WindowError(f"t0={t0} is not a stored sample time")
    if start < 0 or start + count > len(run):
        raise WindowError("continuation not stored")
    return TrajectorySegment(run, float(run.times[start]), float(l), start, count)


def _time_weights(count: int, dt: float) -> np.ndarray:
    w = np.full(count, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def xl_distance(a: TrajectorySegment, b: TrajectorySegment) -> float:
    if a.count != b.count or abs(a.dt_sample - b.dt_sample) > 1e-12 * a.dt_sample \
            or not a.grid.same_as(b.grid):
        raise WindowError("segments differ in length, sampling or grid")
    m = a.grid.mass
    d2 = np.einsum("ijk,jk->i", (a.v1 - b.v1) ** 2 + (a.v2 - b.v2) ** 2, m)
    return float(math.sqrt(max(0.0, float(np.dot(_time_weights(a.count, a.dt_sample), d2)))))


def shift_segment(chi: TrajectorySegment, t: float, source: StoredRun | None = None) -> TrajectorySegment:
    """The window moved forward by t along the stored run (no re-simulation)."""
    return make_segment(source or chi.source, chi.t0 + t, chi.l)


def endpoint(chi: TrajectorySegment):
    return chi.v1[-1], chi.v2[-1]


# -- Hoelder continuity in time ---------------------------------------------------------

@dataclass(frozen=True)
class HolderFit:
    c: float
    beta: float
    r2: float
    degenerate: bool
    gaps: np.ndarray = field(repr=False)
    distances: np.ndarray = field(repr=False)


def holder_fit(chi: TrajectorySegment, shifts, source: StoredRun | None = None,
               floor: float = 1e-13) -> HolderFit:
    """Fit ||L_t1 chi - L_t2 chi|| = c |t1 - t2|^beta over all pairs of shifts."""
    shifts = sorted(set(float(s) for s in shifts))
    segs = [shift_segment(chi, s, source) for s in shifts]
    gaps, dists = [], []
    for i in range(len(segs)):
        for j in range(i + 1, len(segs)):
            gaps.append(shifts[j] - shifts[i])
            dists.append(xl_distance(segs[i], segs[j]))
    gaps = np.array(gaps)
    dists = np.array(dists)
    if gaps.size < 5:
        raise ValueError(f"need at least 5 shift pairs, got {gaps.size}")
    scale = math.sqrt(chi.l) * max(1.0, float(np.max(np.abs(chi.v1))), float(np.max(np.abs(chi.v2))))
    ok = dists > floor * scale
    if ok.sum() < 5:
        return HolderFit(0.0, 1.0, 1.0, True, gaps, dists)
    x, y = np.log(gaps[ok]), np.log(dists[ok])
    beta, logc = np.polyfit(x, y, 1)
    resid = y - (beta * x + logc)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    beta = float(min(max(beta, np.finfo(float).tiny), 1.0))
    return HolderFit(float(math.exp(logc)), beta, r2, False, gaps, dists)


# -- time regularity monitor --------------------------------------------------------------

@dataclass(frozen=True)
class RegularityMonitor:
    times: np.ndarray
    y: np.ndarray
    eta: float
    running_max: np.ndarray

    @property
    def max_on_window(self) -> float:
        sel = self.times >= self.eta
        return float(np.max(self.y[sel])) if sel.any() else math.nan


def time_regularity_monitor(run: StoredRun, fm: FrictionModel, nu: float, eta: float = 0.5,
                            dt: float | None = None) -> RegularityMonitor:
    """y(t) = t^2 |v_t|^2 + t nu ||v||^2 + 2 t j_delta(v), t measured from the run start.

    v_t is the backward difference of consecutive snapshots.
    """
    dt = run.dt_solver if dt is None else dt
    if dt is None:
        raise ValueError("solver time step unknown")
    if run.dt_sample > 10.0 * dt * (1 + 1e-12):
        raise ValueError(f"snapshot cadence {run.dt_sample} is coarser than 10 x dt = {10 * dt}")
    g = run.grid
    t = run.times - run.times[0]
    dv1 = np.diff(run.v1, axis=0) / run.dt_sample
    dv2 = np.diff(run.v2, axis=0) / run.dt_sample
    vt2 = np.einsum("ijk,jk->i", dv1 ** 2 + dv2 ** 2, g.mass)
    vn = run.v_norm_sq()[1:]
    jd = np.array([j_delta(fm, v[:, 0], g) for v in run.v1[1:]])
    tt = t[1:]
    y = tt ** 2 * vt2 + tt * nu * vn + 2.0 * tt * jd
    running = np.maximum.accumulate(np.where(tt >= eta, y, -np.inf))
    return RegularityMonitor(tt, y, eta, running)


# -- Lipschitz / contraction ledger ------------------------------------------------------------

def gronwall_exponent(run: StoredRun, c_lady: float, nu: float) -> np.ndarray:
    """Cumulative integral of (2/nu) c^4 ||w||^2 at every stored time (trapezoid)."""
    f = (2.0 / nu) * c_lady ** 4 * run.v_norm_sq()
    out = np.zeros(len(run))
    out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(run.times))
    return out


def gronwall_factor(run: StoredRun, c_lady: float, nu: float, ta: float, tb: float) -> float:
    g = gronwall_exponent(run, c_lady, nu)
    return float(math.exp(g[run.index_of(tb)] - g[run.index_of(ta)]))


@dataclass(frozen=True)
class ContractionLedger:
    worst_ratio: float  # max over tau < t of |d(t)|^2 / (|d(tau)|^2 G(tau, t))
    pairs: int
    diff_sq: np.ndarray = field(repr=False)
    exponent: np.ndarray = field(repr=False)

    @property
    def holds(self) -> bool:
        return self.worst_ratio <= 1.0


def contraction_ledger(w: StoredRun, v: StoredRun, c_lady: float, nu: float) -> ContractionLedger:
    """Check |w - v|^2(t) <= |w - v|^2(tau) exp(int_tau^t (2/nu) c^4 ||w||^2) at all pairs."""
    if len(w) != len(v) or np.max(np.abs(w.times - v.times)) > 1e-12 * max(1.0, abs(w.times[-1])):
        raise WindowError("runs are not sampled at the same times")
    m = w.grid.mass
    d2 = np.einsum("ijk,jk->i", (w.v1 - v.v1) ** 2 + (w.v2 - v.v2) ** 2, m)
    g = gronwall_exponent(w, c_lady, nu)
    # log-ratio for every tau < t: log d2(t) - log d2(tau) - (g(t) - g(tau))
    ld = np.log(np.maximum(d2, 1e-300))
    a = ld - g
    best_prev = np.minimum.accumulate(a)  # min over tau <= t of (ld(tau) - g(tau))
    worst = -math.inf
    for i in range(1, len(a)):
        worst = max(worst, a[i] - best_prev[i - 1])
    n = len(a)
    return ContractionLedger(float(math.exp(worst)), n * (n - 1) // 2, d2, g)


def endpoint_lipschitz(a: TrajectorySegment, b: TrajectorySegment) -> float:
    """|e(a) - e(b)|_H * sqrt(l) / ||a - b||_{X_l}, the observed endpoint factor C."""
    ea, eb = endpoint(a), endpoint(b)
    m = a.grid.mass
    num = math.sqrt(float(np.sum(m * ((ea[0] - eb[0]) ** 2 + (ea[1] - eb[1]) ** 2))))
    den = xl_distance(a, b)
    return num * math.sqrt(a.l) / den if den > 0 else math.inf


# -- dimension ------------------------------------------------------------------------------

@dataclass
class DimensionReport:
    m: int
    retained_variance: float
    eps: np.ndarray
    counts: np.ndarray
    box_dim: float
    radii: np.ndarray
    corr_sum: np.ndarray
    corr_dim: float
    attraction_rate: float | None = None

    def as_dict(self):
        return {"m": self.m, "retained_variance": self.retained_variance,
                "eps": self.eps.tolist(), "counts": self.counts.tolist(), "box_dim": self.box_dim,
                "radii": self.radii.tolist(), "corr_sum": self.corr_sum.tolist(),
                "corr_dim": self.corr_dim, "attraction_rate": self.attraction_rate}


def _flatten(segments) -> np.ndarray:
    """Rows scaled so the Euclidean inner product is the X_l inner product."""
    s0 = segments[0]
    tw = _time_weights(s0.count, s0.dt_sample)
    wt = np.sqrt(tw[:, None, None] * s0.grid.mass[None])
    rows = []
    for s in segments:
        if s.count != s0.count:
            raise WindowError("segments differ in length")
        rows.append(np.concatenate([(s.v1 * wt).ravel(), (s.v2 * wt).ravel()]))
    return np.array(rows)


def pca_coordinates(segments, m: int):
    """Rank-m principal coordinates of the segment ensemble and retained variance fraction."""
    X = _flatten(segments)
    scale = math.sqrt(float(np.mean(np.sum(X * X, axis=1))))
    Xc = X - X.mean(axis=0)
    G = Xc @ Xc.T
    lam, V = np.linalg.eigh(G)
    lam, V = lam[::-1], V[:, ::-1]
    lam = np.clip(lam, 0.0, None)
    total = float(lam.sum())
    coords = V[:, :m] * np.sqrt(lam[:m])[None, :]
    retained = float(lam[:m].sum() / total) if total > 0 else 1.0
    return coords, retained, scale


def box_counts(points: np.ndarray, eps) -> np.ndarray:
    """Occupied grid boxes per epsilon.

    Grids at different epsilon are not nested, so a raw count can rise with
    epsilon; a cover by smaller boxes is also a cover at any larger epsilon,
    so the reported count is the running minimum over smaller epsilons.
    """
    pts = np.asarray(points, dtype=float)
    # anchor the grid at the data corner so a tiny cluster around 0 is one box
    pts = pts - pts.min(axis=0)
    eps = np.asarray(eps, dtype=float)
    raw = np.array([len(np.unique(np.floor(pts / e).astype(np.int64), axis=0)) for e in eps])
    order = np.argsort(eps)
    out = np.empty_like(raw)
    out[order] = np.minimum.accumulate(raw[order])
    return out


def correlation_sum(points: np.ndarray, radii) -> np.ndarray:
    from scipy.spatial.distance import pdist

    d = np.sort(pdist(np.asarray(points, dtype=float)))
    return np.searchsorted(d, np.asarray(radii), side="left") / max(d.size, 1)


def _mid_slope(x, y, mask):
    if mask.sum() < 3:
        raise ValueError("no scaling regime")
    return float(np.polyfit(x[mask], y[mask], 1)[0])


def box_dimension(points, eps):
    eps = np.asarray(eps, dtype=float)
    n = box_counts(points, eps)
    npts = len(points)
    if np.all(n == 1):
        return n, 0.0
    # linear range: drop saturated ends (one box, or one box per point)
    mask = (n > 1) & (n < 0.5 * npts)
    slope = _mid_slope(np.log(1.0 / eps), np.log(n), mask)
    return n, max(slope, 0.0)


def correlation_dimension(points, radii, lo: float = 1e-3, hi: float = 5e-2):
    radii = np.asarray(radii, dtype=float)
    c = correlation_sum(points, radii)
    npairs = len(points) * (len(points) - 1) / 2
    if np.all(c == c[-1]) and c[-1] in (0.0, 1.0):
        return c, 0.0
    mask = (c >= max(lo, 20.0 / npairs)) & (c <= hi)
    slope = _mid_slope(np.log(radii), np.log(np.where(c > 0, c, 1.0)), mask)
    return c, max(slope, 0.0)


def default_ladder(scale: float, n: int = 25, lo: float = 1e-4, hi: float = 1.0):
    return scale * np.geomspace(lo, hi, n)


def dimension_from_points(points, eps=None, radii=None, m=None, retained=1.0) -> DimensionReport:
    pts = np.asarray(points, dtype=float)
    span = float(np.max(np.ptp(pts, axis=0))) if len(pts) else 0.0
    if span <= 0:
        # a single point: any ladder sees one box, so use the data magnitude
        span = max(float(np.max(np.abs(pts))) if pts.size else 0.0, 1.0)
    if eps is None:
        eps = default_ladder(span)
    if radii is None:
        radii = default_ladder(span, n=40)
    counts, bd = box_dimension(pts, eps)
    cs, cd = correlation_dimension(pts, radii)
    return DimensionReport(m or pts.shape[1], retained, np.asarray(eps), counts, bd,
                           np.asarray(radii), cs, cd)


def dimension_estimate(segments, m: int = 8, eps_ladder=None, fresh=None,
                       min_segments: int = 50) -> DimensionReport:
    """PCA-projected box-counting and correlation dimension of a segment ensemble.

    The default ladders are absolute: they scale with the RMS norm of the
    segments, not with their spread, so an ensemble collapsed onto a fixed
    point occupies one box at every scale.
    """
    if len(segments) < min_segments:
        raise ValueError(f"need at least {min_segments} segments, got {len(segments)}")
    if m < 2:
        raise ValueError("projection rank m must be >= 2")
    coords, retained, scale = pca_coordinates(segments, m)
    eps = default_ladder(scale) if eps_ladder is None else np.asarray(eps_ladder, dtype=float)
    counts, bd = box_dimension(coords, eps)
    radii = default_ladder(scale, n=40)
    cs = correlation_sum(coords, radii)
    try:
        _, cd = correlation_dimension(coords, radii)
    except ValueError:
        if np.ptp(coords) > 1e-12 * scale:
            raise
        cd = 0.0
    report = DimensionReport(m, retained, eps, counts, bd, radii, cs, cd)
    if fresh is not None:
        report.attraction_rate = attraction_rate(fresh, segments)
    return report


def attraction_rate(fresh, segments, times=None) -> float:
    """Exponential rate c1 of the median X_l distance from fresh runs to the segment set.

    ``fresh`` is a list of StoredRun; windows of the segments' length are
    taken at each listed start time (default: every stored window start).
    """
    ref = _flatten(segments)
    l = segments[0].l
    meds, ts = [], []
    if times is None:
        r0 = fresh[0]
        n = len(r0) - segments[0].count + 1
        times = r0.times[:n]
    for t in times:
        ds = []
        for run in fresh:
            x = _flatten([make_segment(run, t, l)])[0]
            ds.append(float(np.min(np.sqrt(np.sum((ref - x) ** 2, axis=1)))))
        meds.append(float(np.median(ds)))
        ts.append(t - times[0])
    meds = np.array(meds)
    ok = meds > 0
    if ok.sum() < 2:
        return math.inf
    slope = np.polyfit(np.array(ts)[ok], np.log(meds[ok]), 1)[0]
    return float(-slope)
