"""MHD2 binary snapshot files.

Layout, all little-endian: magic ``b"MHD2"``, u32 version (1), u32 n,
f64 time, u32 field count, then per field a u8 name length, the ASCII
name and n*n f64 samples, row-major with y outer and x inner.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .fields import Grid, ScalarField, VectorField2
from .state import State

MAGIC = b"MHD2"
VERSION = 1
STATE_FIELDS = ("rho", "ux", "uy", "Bx", "By")

_HEAD = struct.Struct("<4sIIdI")


class SnapshotError(ValueError):
    """A file is not a readable MHD2 snapshot."""


def encode(n: int, time: float, fields: dict) -> bytes:
    parts = [_HEAD.pack(MAGIC, VERSION, n, float(time), len(fields))]
    for name, values in fields.items():
        raw = name.encode("ascii")
        if not 0 < len(raw) < 256:
            raise ValueError(f"field name {name!r} must be 1..255 ASCII bytes")
        arr = np.asarray(values, dtype=float)
        if arr.shape != (n, n):
            raise ValueError(f"field {name} has shape {arr.shape}, expected {(n, n)}")
        parts.append(struct.pack("<B", len(raw)) + raw)
        parts.append(arr.astype("<f8").tobytes(order="C"))
    return b"".join(parts)


def decode(data: bytes) -> tuple[int, float, dict]:
    """Parse snapshot bytes into ``(n, time, {name: array})``."""
    if len(data) < _HEAD.size:
        raise SnapshotError("truncated header")
    magic, version, n, time, count = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"unsupported version {version}")
    pos = _HEAD.size
    size = n * n * 8
    fields = {}
    for _ in range(count):
        if pos >= len(data):
            raise SnapshotError("truncated field table")
        length = data[pos]
        pos += 1
        name = data[pos : pos + length].decode("ascii")
        pos += length
        if pos + size > len(data):
            raise SnapshotError(f"truncated samples for field {name!r}")
        fields[name] = np.frombuffer(data, dtype="<f8", count=n * n, offset=pos).reshape(n, n).copy()
        pos += size
    if pos != len(data):
        raise SnapshotError(f"{len(data) - pos} trailing bytes")
    return n, time, fields


def write_fields(path, n: int, time: float, fields: dict) -> None:
    Path(path).write_bytes(encode(n, time, fields))


def read_fields(path) -> tuple[int, float, dict]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise SnapshotError(str(exc)) from exc
    return decode(data)


def write_state(path, state: State) -> None:
    arrays = (state.rho.values, state.u.x.values, state.u.y.values, state.B.x.values, state.B.y.values)
    write_fields(path, state.grid.n, state.t, dict(zip(STATE_FIELDS, arrays)))


def read_state(path) -> State:
    n, time, fields = read_fields(path)
    missing = [f for f in STATE_FIELDS if f not in fields]
    if missing:
        raise SnapshotError(f"missing fields {', '.join(missing)}")
    grid = Grid(n)
    return State(
        time,
        ScalarField(grid, fields["rho"]),
        VectorField2.from_arrays(grid, fields["ux"], fields["uy"]),
        VectorField2.from_arrays(grid, fields["Bx"], fields["By"]),
    )


def snapshot_name(index: int) -> str:
    return f"snap_{index:06d}.mhd2"
