"""Persistent file formats.

WETB trajectory files are little-endian::

    b"WETB" | u32 version=1 | u32 n_frames | u32 n_particles | u32 dims
    float64 weights[n_frames]
    float32 coords[n_frames, n_particles, dims]      (frame-major)

Everything else (models, reports, checkpoints) is JSON. Floats are written
with ``repr`` precision, so they read back bit-identically.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .core import Trajectory, WeightedFrameSet, WeightSource
from .errors import FormatError

MAGIC = b"WETB"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def _atomic_write(path, payload: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def encode_wetb(frames, weights=None) -> bytes:
    f = np.asarray(frames)
    if f.ndim == 2:
        f = f[None]
    if f.ndim != 3:
        raise FormatError(f"frames must be (n_frames, n_particles, dims), got {f.shape}")
    n, p, d = f.shape
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype="<f8")
    if w.shape != (n,):
        raise FormatError(f"{n} frames but {w.shape} weights")
    return b"".join([_HEADER.pack(MAGIC, VERSION, n, p, d),
                     np.ascontiguousarray(w, dtype="<f8").tobytes(),
                     np.ascontiguousarray(f, dtype="<f4").tobytes()])


def decode_wetb(buf: bytes):
    """Return ``(frames float32, weights float64)`` from WETB bytes."""
    if len(buf) < _HEADER.size:
        raise FormatError("file shorter than the WETB header")
    magic, version, n, p, d = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported WETB version {version}")
    need = _HEADER.size + 8 * n + 4 * n * p * d
    if len(buf) != need:
        raise FormatError(f"expected {need} bytes, found {len(buf)}")
    w = np.frombuffer(buf, dtype="<f8", count=n, offset=_HEADER.size).astype(np.float64)
    f = np.frombuffer(buf, dtype="<f4", count=n * p * d, offset=_HEADER.size + 8 * n)
    return f.reshape(n, p, d).astype(np.float32), w


def write_wetb(path, frames, weights=None):
    _atomic_write(path, encode_wetb(frames, weights))


def read_wetb(path):
    with open(path, "rb") as fh:
        return decode_wetb(fh.read())


def save_frameset(path, samples: WeightedFrameSet):
    write_wetb(path, samples.frames, samples.weights)


def load_frameset(path, source=WeightSource.RAW_UNWEIGHTED) -> WeightedFrameSet:
    f, w = read_wetb(path)
    return WeightedFrameSet(f, w, source)


def save_trajectory(path, traj: Trajectory):
    write_wetb(path, traj.frames)


def load_trajectory(path, save_stride=1, dt=1.0) -> Trajectory:
    f, _ = read_wetb(path)
    return Trajectory(f, save_stride, dt)


def to_jsonable(obj):
    """Convert numpy containers and scalars to plain Python for ``json``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def write_json(path, obj, indent=2):
    text = json.dumps(to_jsonable(obj), indent=indent, sort_keys=False, allow_nan=False)
    _atomic_write(path, (text + "\n").encode())


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
