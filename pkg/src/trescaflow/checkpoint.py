"""Binary checkpoints.

Layout (little-endian): magic ``TCF1``; u32 version; u64 Nq, Ns; f64 L, t,
nu, k, delta, eps_floor, U0, alpha; then v1, v2, p as row-major float64
arrays of shape (Nq, Ns + 1).  Version 2 appends u64 n, n float64 values of
Adams-Bashforth history and the f64 time step, so a restart continues
bit-exactly.
"""
from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .state import State

MAGIC = b"TCF1"
_HEAD = struct.Struct("<4sIQQ8d")


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class CheckpointMeta:
    L: float
    nu: float
    k: float
    delta: float
    eps_floor: float
    U0: float
    alpha: float
    dt: float = float("nan")


def atomic_write(path, data: bytes):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode(state: State, meta: CheckpointMeta) -> bytes:
    nq, ns1 = state.v1.shape
    version = 1 if state.history is None else 2
    head = _HEAD.pack(MAGIC, version, nq, ns1 - 1, meta.L, state.t, meta.nu, meta.k,
                      meta.delta, meta.eps_floor, meta.U0, meta.alpha)
    parts = [head] + [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in (state.v1, state.v2, state.p)]
    if version == 2:
        h = np.ascontiguousarray(state.history, dtype="<f8")
        parts += [struct.pack("<Q", h.size), h.tobytes(), struct.pack("<d", meta.dt)]
    return b"".join(parts)


def decode(data: bytes, expect_shape=None):
    if len(data) < _HEAD.size:
        raise CheckpointError("checkpoint truncated: header incomplete")
    magic, version, nq, ns, L, t, nu, k, delta, eps, U0, alpha = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}; expected {MAGIC.decode()}")
    if version not in (1, 2):
        raise CheckpointError(f"unsupported {MAGIC.decode()} version {version}")
    shape = (nq, ns + 1)
    if expect_shape is not None and tuple(expect_shape) != shape:
        raise CheckpointError(f"dimension mismatch: checkpoint grid {nq}x{ns}, "
                              f"expected {expect_shape[0]}x{expect_shape[1] - 1}")
    n = nq * (ns + 1)
    off = _HEAD.size
    need = off + 3 * 8 * n
    if len(data) < need:
        raise CheckpointError("checkpoint truncated: field data incomplete")
    arrays = [np.frombuffer(data, "<f8", n, off + i * 8 * n).reshape(shape).astype(float) for i in range(3)]
    history = None
    dt = float("nan")
    end = need
    if version == 2:
        if len(data) < need + 8:
            raise CheckpointError("checkpoint truncated: history length missing")
        (m,) = struct.unpack_from("<Q", data, need)
        end = need + 8 + 8 * m + 8
        if len(data) < end:
            raise CheckpointError("checkpoint truncated: history incomplete")
        history = np.frombuffer(data, "<f8", m, need + 8).astype(float)
        (dt,) = struct.unpack_from("<d", data, end - 8)
    if len(data) != end:
        raise CheckpointError(f"checkpoint has {len(data) - end} trailing bytes")
    meta = CheckpointMeta(L, nu, k, delta, eps, U0, alpha, dt)
    return State(arrays[0], arrays[1], arrays[2], t, history), meta


def save_checkpoint(path, state: State, meta: CheckpointMeta):
    atomic_write(path, encode(state, meta))


def load_checkpoint(path, expect_shape=None):
    with open(path, "rb") as f:
        return decode(f.read(), expect_shape)


def checkpoint_roundtrip(state: State, path, meta: CheckpointMeta | None = None) -> State:
    meta = meta or CheckpointMeta(1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0)
    save_checkpoint(path, state, meta)
    return load_checkpoint(path, state.v1.shape)[0]
