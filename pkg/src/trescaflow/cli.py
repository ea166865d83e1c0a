"""Command-line entry point.

On failure the last line on stderr is ``error: <category>: <message>`` and the
exit code is nonzero; categories are usage, config, io, numerical, checkpoint,
manifest and validation.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, CheckpointMeta, load_checkpoint
from .config import ConfigError, parse_config, serialize_config
from .geometry import GeometryError
from .outputs import ManifestError, csv_bytes, verify_manifest, write_manifest, write_outputs

EXIT = {"usage": 2, "config": 3, "io": 4, "numerical": 5, "checkpoint": 6, "manifest": 7,
        "validation": 8}


class CliError(Exception):
    def __init__(self, category, msg):
        super().__init__(msg)
        self.category = category


def _load(path):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise CliError("io", f"cannot read config {path}: {exc}") from exc
    try:
        return parse_config(text)
    except (ConfigError, GeometryError) as exc:
        raise CliError("config", str(exc)) from exc


def _meta(cfg, dt=float("nan")):
    return CheckpointMeta(cfg.L, cfg.nu, cfg.k, cfg.delta, cfg.eps_floor, cfg.U0, cfg.alpha, dt)


def cmd_run(args):
    from .workflows import build_problem, simulate

    cfg = _load(args.config)
    out = args.out or cfg.out_dir
    pb = build_problem(cfg)
    v0, dt = None, None
    if args.restart:
        try:
            v0, meta = load_checkpoint(args.restart, pb.grid.shape)
        except (CheckpointError, OSError) as exc:
            raise CliError("checkpoint", str(exc)) from exc
        if v0.history is not None and math.isfinite(meta.dt):
            dt = meta.dt
    summary = simulate(cfg, pb, v0=v0, dt=dt)
    params = cfg.as_dict()
    params["dt_effective"] = summary.dt
    m = write_outputs(summary, out, pb.grid, pb.fm, cfg.nu, params, cfg.digest(), _meta(cfg, summary.dt),
                      extra={"config.txt": serialize_config(cfg).encode()},
                      wall_times=summary.wall_times)
    worst = float(np.max(summary.step_residuals)) if summary.step_residuals.size else math.nan
    print(json.dumps({"out": out, "files": len(m.files), "t": summary.final.t, "dt": summary.dt,
                      "max_energy_residual": worst}))


def cmd_validate(args):
    from .validation import couette_run

    r = couette_run(args.N, args.regime)
    if args.regime == "stick":
        ok = r.err_tresca <= 1e-3
    else:
        ok = abs(r.bottom_speed - 0.5) <= 0.02 * 0.5 and r.r_eq <= 1e-3 * 0.05 and r.r_bound <= 1e-3 * 0.05
    print(json.dumps({**r.__dict__, "pass": ok}))
    if not ok:
        raise CliError("validation", f"couette {args.regime} check failed")


def cmd_constants(args):
    from .workflows import constants

    cfg = _load(args.config)
    est, ladder = constants(cfg, args.hopf_samples, args.lady_samples)
    print(json.dumps(est.as_dict()))
    print("alpha,hopf_ratio,F")
    for a, r, F in ladder:
        print(f"{a!r},{r!r},{F!r}")


def cmd_trajectories(args):
    from dataclasses import replace
    from .workflows import trajectory_distances

    cfg = _load(args.config)
    kw = {k: v for k, v in (("l", args.l), ("dt_sample", args.dt_sample)) if v is not None}
    cfg = replace(cfg, **kw)
    shifts = [float(s) for s in args.shifts.split(",")]
    rows = trajectory_distances(cfg, shifts)
    files = {"distances.csv": csv_bytes(("shift_a", "shift_b", "distance"), rows)}
    write_manifest(args.out, files, cfg.as_dict(), cfg.digest())
    print(json.dumps({"out": args.out, "pairs": len(rows)}))


def cmd_dimension(args):
    from .workflows import dimension

    cfg = _load(args.config)
    eps = [float(e) for e in args.eps.split(",")] if args.eps else None
    rep = dimension(cfg, args.m, eps, args.ensemble, args.burn_in)
    files = {
        "dimension.json": (json.dumps(rep.as_dict(), indent=2, sort_keys=True) + "\n").encode(),
        "box_counting.csv": csv_bytes(("eps", "count"), zip(rep.eps, rep.counts)),
        "correlation_sum.csv": csv_bytes(("radius", "corr_sum"), zip(rep.radii, rep.corr_sum)),
    }
    write_manifest(args.out, files, cfg.as_dict(), cfg.digest())
    print(json.dumps({"box_dim": rep.box_dim, "corr_dim": rep.corr_dim,
                      "retained_variance": rep.retained_variance}))


def cmd_verify(args):
    problems = verify_manifest(args.dir)
    if problems:
        raise CliError("manifest", "; ".join(problems))
    print("ok")


def build_parser():
    p = argparse.ArgumentParser(prog="trescaflow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one trajectory and write outputs")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--restart", help="continue from a checkpoint file")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="closed-form validation cases")
    v.add_argument("case", choices=["couette"])
    v.add_argument("--regime", choices=["stick", "slip"], required=True)
    v.add_argument("--N", type=int, default=64)
    v.set_defaults(func=cmd_validate)

    c = sub.add_parser("constants", help="estimate lambda1, Ladyzhenskaya and Hopf constants")
    c.add_argument("--config", required=True)
    c.add_argument("--hopf-samples", type=int, default=100)
    c.add_argument("--lady-samples", type=int, default=1000)
    c.set_defaults(func=cmd_constants)

    t = sub.add_parser("trajectories", help="pairwise distances of shifted windows")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--l", type=float)
    t.add_argument("--dt-sample", type=float)
    t.add_argument("--shifts", required=True, help="comma-separated shift times")
    t.set_defaults(func=cmd_trajectories)

    d = sub.add_parser("dimension", help="dimension estimate of the sampled attractor")
    d.add_argument("--config", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--ensemble", type=int)
    d.add_argument("--burn-in", type=float)
    d.add_argument("--m", type=int, default=8)
    d.add_argument("--eps", help="comma-separated absolute epsilon ladder")
    d.set_defaults(func=cmd_dimension)

    m = sub.add_parser("verify-manifest", help="check file sizes and checksums")
    m.add_argument("dir")
    m.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code:
            print("error: usage: invalid arguments", file=sys.stderr)
        return int(exc.code or 0) and EXIT["usage"]
    try:
        args.func(args)
    except CliError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return EXIT[exc.category]
    except (ConfigError, GeometryError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT["config"]
    except ManifestError as exc:
        print(f"error: manifest: {exc}", file=sys.stderr)
        return EXIT["manifest"]
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT["io"]
    except (RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"error: numerical: {str(exc).splitlines()[0]}", file=sys.stderr)
        return EXIT["numerical"]
    return 0


if __name__ == "__main__":
    sys.exit(main())
