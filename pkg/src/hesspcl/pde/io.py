"""CSV serialization of meshes, grids and observations.

Every file starts with a ``#`` header line naming its columns.
"""
from __future__ import annotations

import os

import numpy as np

from .fem import TriMesh


def _write(path, header, table, fmt):
    np.savetxt(path, table, delimiter=",", header=header, comments="# ", fmt=fmt)


def write_nodes(path, coords, values=None):
    coords = np.asarray(coords, dtype=float)
    if values is None:
        _write(path, "x,y", coords, "%.17g")
    else:
        _write(path, "x,y,value", np.column_stack([coords, values]), "%.17g")


def read_nodes(path):
    """Return ``(coords, values)``; ``values`` is ``None`` for a two-column file."""
    table = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return table[:, :2], (table[:, 2] if table.shape[1] > 2 else None)


def write_mesh(directory, mesh: TriMesh):
    os.makedirs(directory, exist_ok=True)
    write_nodes(os.path.join(directory, "nodes.csv"), mesh.vertices)
    _write(os.path.join(directory, "triangles.csv"), "i,j,k", mesh.triangles, "%d")


def read_mesh(directory) -> TriMesh:
    coords, _ = read_nodes(os.path.join(directory, "nodes.csv"))
    tris = np.loadtxt(os.path.join(directory, "triangles.csv"), delimiter=",", comments="#", dtype=np.int64, ndmin=2)
    return TriMesh(coords, tris)


def write_snapshots(directory, coords, snapshots, dt):
    """One ``snapshot_NNNN.csv`` per time level, columns ``x,y,value``."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for n, field in enumerate(np.asarray(snapshots)):
        path = os.path.join(directory, f"snapshot_{n:04d}.csv")
        table = np.column_stack([coords, field])
        _write(path, f"step={n} t={n * dt:.17g}\nx,y,value", table, "%.17g")
        paths.append(path)
    return paths


def read_snapshots(directory):
    names = sorted(p for p in os.listdir(directory) if p.startswith("snapshot_") and p.endswith(".csv"))
    fields = [read_nodes(os.path.join(directory, p))[1] for p in names]
    return np.stack(fields)
