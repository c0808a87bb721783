"""Bit-exact field snapshot files.

Layout: one ASCII header line ``PLNS1 <d> <n> <components> <t>`` followed by a
newline, then little-endian float64 values, grid points in row-major order with
the components of each point stored contiguously.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .grid import PeriodicGrid

MAGIC = "PLNS1"


@dataclass(frozen=True)
class Snapshot:
    dim: int
    n: int
    t: float
    data: np.ndarray  # (components,) + (n,) * dim

    @property
    def components(self) -> int:
        return self.data.shape[0]

    def grid(self, scheme: str = "centered") -> PeriodicGrid:
        return PeriodicGrid(self.dim, self.n, scheme)


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_snapshot(path, grid: PeriodicGrid, field: np.ndarray, t: float) -> None:
    field = np.asarray(field, dtype=float)
    if field.shape[field.ndim - grid.dim:] != grid.shape:
        raise InvalidInputError(f"field shape {field.shape} does not match grid {grid.shape}")
    comps = field.reshape((-1,) + grid.shape)
    points_major = np.moveaxis(comps, 0, -1)
    header = f"{MAGIC} {grid.dim} {grid.n} {comps.shape[0]} {format_float(t)}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(points_major).astype("<f8").tobytes())


def read_snapshot(path) -> Snapshot:
    raw = Path(path).read_bytes()
    end = raw.find(b"\n")
    if end < 0:
        raise InvalidInputError(f"{path}: missing snapshot header")
    parts = raw[:end].decode("ascii", errors="replace").split()
    if len(parts) != 5 or parts[0] != MAGIC:
        raise InvalidInputError(f"{path}: malformed snapshot header {raw[:end]!r}")
    try:
        dim, n, comps = int(parts[1]), int(parts[2]), int(parts[3])
        t = float(parts[4])
    except ValueError as exc:
        raise InvalidInputError(f"{path}: malformed snapshot header: {exc}") from None
    if dim not in (1, 2, 3) or n < 1 or comps < 1:
        raise InvalidInputError(f"{path}: invalid header values d={dim} n={n} components={comps}")
    payload = raw[end + 1:]
    expected = 8 * comps * n**dim
    if len(payload) != expected:
        raise InvalidInputError(f"{path}: expected {expected} data bytes, found {len(payload)}")
    values = np.frombuffer(payload, dtype="<f8").astype(float)
    data = np.moveaxis(values.reshape((n,) * dim + (comps,)), -1, 0)
    return Snapshot(dim=dim, n=n, t=t, data=np.ascontiguousarray(data))


def export_csv(snapshot: Snapshot, out) -> None:
    """Write one row per grid point: coordinates, then component values."""
    grid = PeriodicGrid(snapshot.dim, snapshot.n)
    coords = grid.coordinates().reshape(snapshot.dim, -1)
    values = snapshot.data.reshape(snapshot.components, -1)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([f"x{a + 1}" for a in range(snapshot.dim)] + [f"c{c}" for c in range(snapshot.components)])
    for i in range(coords.shape[1]):
        writer.writerow([format_float(v) for v in coords[:, i]] + [format_float(v) for v in values[:, i]])
