"""Trajectory dumps: long-format CSV and a flat little-endian binary.

The binary layout is a 32-byte header ``int64 dim, int64 n_per_axis,
int64 N, float64 T`` followed by the ``(N + 1) * n_per_axis**dim`` levels
as float64 in time-major order.  Both formats round-trip bit-exactly.
"""
from __future__ import annotations

import csv
import struct

import numpy as np

from .discretization import Grid, TimeAxis, Trajectory

__all__ = ["write_csv", "read_csv", "write_binary", "read_binary", "HEADER"]

HEADER = struct.Struct("<qqqd")


def write_csv(traj: Trajectory, path) -> None:
    """One ``n,node,value`` row per level and node; floats written with ``repr``.

    Two leading comment lines carry the grid and time axis.
    """
    g, t = traj.grid, traj.time
    with open(path, "w", newline="") as fh:
        fh.write(f"# dim={g.dim} n_per_axis={g.n_per_axis} length={g.length!r}\n")
        fh.write(f"# N={t.N} T={t.T!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "node", "value"])
        for n, row in enumerate(traj.levels):
            w.writerows((n, i, repr(float(v))) for i, v in enumerate(row))


def _meta(line: str) -> dict:
    return dict(item.split("=", 1) for item in line.lstrip("#").split())


def read_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        gmeta = _meta(fh.readline())
        tmeta = _meta(fh.readline())
        grid = Grid(int(gmeta["dim"]), int(gmeta["n_per_axis"]), float(gmeta["length"]))
        time = TimeAxis(float(tmeta["T"]), int(tmeta["N"]))
        reader = csv.reader(fh)
        if next(reader) != ["n", "node", "value"]:
            raise ValueError(f"{path}: unexpected CSV header")
        levels = np.full((time.N + 1, grid.size), np.nan)
        for n, i, v in reader:
            levels[int(n), int(i)] = float(v)
    if np.isnan(levels).any():
        raise ValueError(f"{path}: missing trajectory entries")
    return Trajectory(grid, time, levels)


def write_binary(traj: Trajectory, path) -> None:
    g, t = traj.grid, traj.time
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(g.dim, g.n_per_axis, t.N, t.T))
        fh.write(np.ascontiguousarray(traj.levels, dtype="<f8").tobytes())


def read_binary(path, length: float = 1.0) -> Trajectory:
    """Inverse of :func:`write_binary`; the domain length is not stored."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.size:
        raise ValueError(f"{path}: truncated header")
    dim, n, N, T = HEADER.unpack_from(raw)
    grid, time = Grid(dim, n, length), TimeAxis(T, N)
    body = np.frombuffer(raw, dtype="<f8", offset=HEADER.size)
    if body.size != (N + 1) * grid.size:
        raise ValueError(f"{path}: expected {(N + 1) * grid.size} values, found {body.size}")
    return Trajectory(grid, time, body.reshape(N + 1, grid.size).astype(float))
