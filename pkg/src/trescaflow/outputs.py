"""Deterministic output files and the run manifest."""
from __future__ import annotations

import hashlib
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .checkpoint import CheckpointMeta, atomic_write, encode
from .diagnostics import EnergyRecord
from .friction import FrictionModel, wall_traction, tangential_stress

MANIFEST = "manifest.json"


class ManifestError(RuntimeError):
    pass


@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    start_time: float
    end_time: float
    files: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"config_hash": self.config_hash, "code_version": self.code_version,
                           "start_time": self.start_time, "end_time": self.end_time,
                           "files": self.files, "parameters": self.parameters},
                          indent=2, sort_keys=True) + "\n"


def _num(x) -> str:
    return format(float(x), ".17g")


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(_num(v) for v in r) + "\n")
    return buf.getvalue().encode()


def energy_csv(records) -> bytes:
    return csv_bytes(EnergyRecord.FIELDS, [r.row() for r in records])


def wall_csv(state, grid, fm: FrictionModel, nu: float) -> bytes:
    slip = state.v1[:, 0]
    stress = tangential_stress(state, grid, nu).values
    traction = wall_traction(state, grid, nu).values
    comp = np.abs(fm.k * np.abs(slip) + traction * slip)
    rows = np.column_stack([grid.q, slip, stress, comp])
    return csv_bytes(("x1", "slip", "stress", "comp_residual"), rows)


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_files(out_dir, files: dict) -> dict:
    """Atomically write {name: bytes}; on failure remove what was written."""
    os.makedirs(out_dir, exist_ok=True)
    inventory = {}
    written = []
    try:
        for name in sorted(files):
            data = files[name]
            path = os.path.join(out_dir, name)
            atomic_write(path, data)
            written.append(path)
            inventory[name] = {"size": len(data), "sha256": sha256(data)}
    except OSError as exc:
        for p in written:
            try:
                os.unlink(p)
            except OSError:
                pass
        raise OSError(f"output write failed in {out_dir}: {exc}") from exc
    return inventory


def write_outputs(summary, out_dir, grid, fm: FrictionModel, nu: float, parameters: dict,
                  config_hash: str, checkpoint_meta: CheckpointMeta | None = None,
                  extra: dict | None = None, wall_times=(0.0, 0.0)) -> RunManifest:
    """Write the energy series, one wall-trace CSV per snapshot, optional final
    checkpoint and extra files, then the manifest listing all of them."""
    files = {"energy.csv": energy_csv(summary.records)}
    for i, st in enumerate(summary.snapshots):
        files[f"snapshot_{i:06d}.csv"] = wall_csv(st, grid, fm, nu)
    if checkpoint_meta is not None and summary.final is not None:
        files["final.tcf"] = encode(summary.final, checkpoint_meta)
    files.update(extra or {})
    inventory = write_files(out_dir, files)
    manifest = RunManifest(config_hash, __version__, float(wall_times[0]), float(wall_times[1]),
                           inventory, parameters)
    atomic_write(os.path.join(out_dir, MANIFEST), manifest.to_json().encode())
    return manifest


def write_manifest(out_dir, files: dict, parameters: dict, config_hash: str,
                   wall_times=(0.0, 0.0)) -> RunManifest:
    inventory = write_files(out_dir, files)
    manifest = RunManifest(config_hash, __version__, float(wall_times[0]), float(wall_times[1]),
                           inventory, parameters)
    atomic_write(os.path.join(out_dir, MANIFEST), manifest.to_json().encode())
    return manifest


def verify_manifest(out_dir) -> list:
    """Return a list of problems (empty when every listed file matches)."""
    path = os.path.join(out_dir, MANIFEST)
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, ValueError) as exc:
        raise ManifestError(f"cannot read manifest: {exc}") from exc
    problems = []
    for name, info in sorted(data.get("files", {}).items()):
        p = os.path.join(out_dir, name)
        if not os.path.exists(p):
            problems.append(f"{name}: missing")
            continue
        with open(p, "rb") as f:
            blob = f.read()
        if len(blob) != info["size"]:
            problems.append(f"{name}: size {len(blob)} != {info['size']}")
        elif sha256(blob) != info["sha256"]:
            problems.append(f"{name}: checksum mismatch")
    return problems
