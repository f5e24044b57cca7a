"""Persistence: binary field snapshots, JSON debug dumps and diagnostics CSV.

Snapshot layout (all little-endian)::

    offset  size  content
    0       8     magic b"DNSFIELD"
    8       4     format version (uint32, currently 1)
    12      4     n, points per axis (uint32)
    16      8     box length L (float64)
    24      ...   coefficients, complex128 (real, imag as float64 pairs),
                  shape (2, n, n) in C order: component, k1 index, k2 index,
                  each index in FFT order 0, 1, ..., n/2, -n/2+1, ..., -1

Coefficients follow ``c = fft2(u) / n**2``.
"""

from __future__ import annotations

import csv
import json
import os
import struct
from pathlib import Path

import numpy as np

from .dynamics import DiagnosticsRecord
from .spectral import Grid, SpectralVectorField

MAGIC = b"DNSFIELD"
VERSION = 1
_HEADER = struct.Struct("<8sIId")
JSON_MAX_N = 64


class SnapshotFormatError(ValueError):
    pass


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def save_snapshot(path, field: SpectralVectorField):
    path = Path(path)
    g = field.grid
    payload = np.ascontiguousarray(field.coefficients, dtype="<c16").tobytes()
    _atomic_write(path, _HEADER.pack(MAGIC, VERSION, g.n, g.box_length) + payload)


def load_snapshot(path) -> SpectralVectorField:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SnapshotFormatError(f"{path}: truncated header")
    magic, version, n, box = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotFormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 2 * n * n * 16
    if len(data) != expected:
        raise SnapshotFormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    c = np.frombuffer(data, dtype="<c16", offset=_HEADER.size).reshape(2, n, n).astype(np.complex128)
    return SpectralVectorField(c, Grid(n, box))


def field_to_json(field: SpectralVectorField) -> dict:
    """Lossless JSON form (floats round-trip through ``repr``); only for ``n <= 64``."""
    g = field.grid
    if g.n > JSON_MAX_N:
        raise ValueError(f"JSON dumps are limited to n <= {JSON_MAX_N}")
    c = field.coefficients
    return {
        "format": "dampedns-field",
        "version": VERSION,
        "n": g.n,
        "box_length": g.box_length,
        "real": c.real.tolist(),
        "imag": c.imag.tolist(),
    }


def field_from_json(doc: dict) -> SpectralVectorField:
    grid = Grid(int(doc["n"]), float(doc["box_length"]))
    c = np.asarray(doc["real"], dtype=float) + 1j * np.asarray(doc["imag"], dtype=float)
    if c.shape != (2,) + grid.shape:
        raise SnapshotFormatError(f"coefficient shape {c.shape} does not match n={grid.n}")
    return SpectralVectorField(c, grid)


def write_json(path, obj):
    data = json.dumps(obj, indent=2, sort_keys=True, allow_nan=True).encode()
    _atomic_write(Path(path), data + b"\n")


DIAGNOSTICS_HEADER = DiagnosticsRecord.columns()


def write_diagnostics_csv(path, records):
    """One row per record; floats written with ``repr`` so they reload bit-exactly."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIAGNOSTICS_HEADER)
        for r in records:
            w.writerow([repr(float(x)) for x in r.as_row()])


def read_diagnostics_csv(path) -> list[DiagnosticsRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != DIAGNOSTICS_HEADER:
        raise ValueError(f"{path}: unexpected diagnostics header")
    return [DiagnosticsRecord(*map(float, row)) for row in rows[1:]]
