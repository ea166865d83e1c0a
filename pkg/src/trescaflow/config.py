"""Line-oriented run configuration.

Format: ``key = value`` lines, ``#`` comments, optional ``[section]`` headers
(a key under a header must belong to that section), dotted keys such as
``h.mean`` and indexed keys ``h.cos[1]``.  Every parameter has either a
documented default or is mandatory; :func:`parse_config` materializes all of
them so nothing downstream relies on hidden defaults.
"""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, fields

from .geometry import ChannelGeometry
from .friction import FrictionModel
from .state import SolverConfig


class ConfigError(ValueError):
    pass


REQUIRED = object()


def _positive(x):
    return x > 0


def _nonneg(x):
    return x >= 0


# key -> (section, attribute, type, default, check, rule text)
SCHEMA = {
    "L": ("geometry", "L", float, REQUIRED, _positive, "must be > 0"),
    "h.mean": ("geometry", "h_mean", float, REQUIRED, _positive, "must be > 0"),
    "Nq": ("geometry", "Nq", int, 32, lambda n: n >= 8, "must be >= 8"),
    "Ns": ("geometry", "Ns", int, 32, lambda n: n >= 8, "must be >= 8"),
    "U0": ("background", "U0", float, REQUIRED, math.isfinite, "must be finite"),
    "alpha": ("background", "alpha", float, 0.5, lambda a: 0 < a <= 1, "must lie in (0, 1]"),
    "k": ("friction", "k", float, REQUIRED, _nonneg, "must be >= 0"),
    "delta": ("friction", "delta", float, 0.1, lambda d: 0 < d <= 1, "must lie in (0, 1]"),
    "eps_floor": ("friction", "eps_floor", float, 1e-6, _positive, "must be > 0"),
    "nu": ("solver", "nu", float, REQUIRED, _positive, "must be > 0"),
    "dt": ("solver", "dt", float, None, _positive, "must be > 0 (or 'auto')"),
    "cfl": ("solver", "cfl", float, 1.0, _positive, "must be > 0"),
    "proj_tol": ("solver", "proj_tol", float, 1e-10, _positive, "must be > 0"),
    "picard_tol": ("solver", "picard_tol", float, 1e-10, _positive, "must be > 0"),
    "picard_max": ("solver", "picard_max", int, 100, lambda n: n >= 1, "must be >= 1"),
    "T_end": ("solver", "T_end", float, REQUIRED, _nonneg, "must be >= 0"),
    "snapshot_dt": ("solver", "snapshot_dt", float, 0.1, _positive, "must be > 0"),
    "l": ("analysis", "l", float, 1.0, _positive, "must be > 0"),
    "dt_sample": ("analysis", "dt_sample", float, 0.1, _positive, "must be > 0"),
    "ensemble": ("analysis", "ensemble", int, 10, lambda n: n >= 1, "must be >= 1"),
    "burn_in": ("analysis", "burn_in", float, 0.0, _nonneg, "must be >= 0"),
    "eta": ("analysis", "eta", float, 0.5, _positive, "must be > 0"),
    "init.amplitude": ("analysis", "init_amplitude", float, 0.0, _nonneg, "must be >= 0"),
    "seed": ("analysis", "seed", int, REQUIRED, _nonneg, "must be >= 0"),
    "out_dir": ("output", "out_dir", str, "out", lambda s: bool(s), "must be non-empty"),
}
SECTIONS = ("geometry", "background", "friction", "solver", "analysis", "output")
_INDEXED = re.compile(r"^h\.(cos|sin)\[(\d+)\]$")


@dataclass(frozen=True)
class RunConfig:
    L: float
    h_mean: float
    h_cos: tuple
    h_sin: tuple
    Nq: int
    Ns: int
    U0: float
    alpha: float
    k: float
    delta: float
    eps_floor: float
    nu: float
    dt: float | None
    cfl: float
    proj_tol: float
    picard_tol: float
    picard_max: int
    T_end: float
    snapshot_dt: float
    l: float
    dt_sample: float
    ensemble: int
    burn_in: float
    eta: float
    init_amplitude: float
    seed: int
    out_dir: str

    def geometry(self) -> ChannelGeometry:
        return ChannelGeometry(self.L, self.h_mean, self.h_cos, self.h_sin, self.Nq, self.Ns)

    def friction(self) -> FrictionModel:
        return FrictionModel(self.k, self.delta, self.eps_floor)

    def solver(self) -> SolverConfig:
        return SolverConfig(nu=self.nu, dt=self.dt, cfl=self.cfl, proj_tol=self.proj_tol,
                            picard_tol=self.picard_tol, picard_max=self.picard_max,
                            T_end=self.T_end, snapshot_dt=self.snapshot_dt)

    def as_dict(self) -> dict:
        return {f.name: (list(getattr(self, f.name)) if isinstance(getattr(self, f.name), tuple)
                         else getattr(self, f.name)) for f in fields(self)}

    def digest(self) -> str:
        return hashlib.sha256(serialize_config(self).encode()).hexdigest()


def _convert(raw: str, typ, key, lineno):
    try:
        if typ is int:
            if not re.fullmatch(r"[+-]?\d+", raw):
                raise ValueError
            return int(raw)
        if typ is float:
            v = float(raw)
            if math.isnan(v):
                raise ValueError
            return v
        return raw
    except ValueError:
        raise ConfigError(f"line {lineno}: {key} expects {typ.__name__}, got {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    values = {}
    seen = {}
    harmonics = {"cos": {}, "sin": {}}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        m = re.fullmatch(r"\[\s*([A-Za-z_]+)\s*\]", body)
        if m:
            section = m.group(1)
            if section not in SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {body!r}")
        key, raw = (p.strip() for p in body.split("=", 1))
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key} (first on line {seen[key]})")
        seen[key] = lineno
        mi = _INDEXED.match(key)
        if mi:
            if section not in (None, "geometry"):
                raise ConfigError(f"line {lineno}: {key} belongs to [geometry], not [{section}]")
            idx = int(mi.group(2))
            if idx < 1:
                raise ConfigError(f"line {lineno}: {key}: harmonic index starts at 1")
            harmonics[mi.group(1)][idx] = _convert(raw, float, key, lineno)
            continue
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        sec, attr, typ, default, check, rule = SCHEMA[key]
        if section is not None and section != sec:
            raise ConfigError(f"line {lineno}: {key} belongs to [{sec}], not [{section}]")
        if key == "dt" and raw == "auto":
            values[attr] = None
            continue
        v = _convert(raw, typ, key, lineno)
        if not check(v):
            raise ConfigError(f"line {lineno}: {key} = {raw} {rule}")
        values[attr] = v
    for key, (sec, attr, typ, default, check, rule) in SCHEMA.items():
        if attr not in values:
            if default is REQUIRED:
                raise ConfigError(f"missing mandatory key {key} in [{sec}]")
            values[attr] = default
    for kind in ("cos", "sin"):
        n = max(harmonics[kind], default=0)
        values[f"h_{kind}"] = tuple(harmonics[kind].get(i, 0.0) for i in range(1, n + 1))
    return RunConfig(**values)


def _fmt(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for sec in SECTIONS:
        lines.append(f"[{sec}]")
        for key, (s, attr, *_rest) in SCHEMA.items():
            if s != sec:
                continue
            lines.append(f"{key} = {_fmt(getattr(cfg, attr))}")
            if key == "h.mean":
                for kind in ("cos", "sin"):
                    for i, c in enumerate(getattr(cfg, f"h_{kind}"), start=1):
                        lines.append(f"h.{kind}[{i}] = {c!r}")
        lines.append("")
    return "\n".join(lines)
