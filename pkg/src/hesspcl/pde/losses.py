"""Tape builders for the finite-difference residual losses and the DNN-only losses."""
from __future__ import annotations

import numpy as np

from ..linalg import SparseMatrix
from ..nn import NetworkSpec, register_network
from ..primitives import Linear, SumOfSquares
from ..tape import TapeBuilder
from .grid import Grid2D, flux_matrix_in_kappa
from .manufactured import Observations


def _network_columns(matrix: SparseMatrix, node_inputs):
    """Fold node columns that share a network input into one column.

    Returns the compressed matrix and the distinct network inputs it acts on;
    nodes that no row touches are dropped.
    """
    node_inputs = np.asarray(node_inputs, dtype=float)
    if node_inputs.ndim == 1:
        node_inputs = node_inputs[:, None]
    used = np.unique(matrix.indices)
    keys, inverse = np.unique(node_inputs[used], axis=0, return_inverse=True)
    remap = np.full(matrix.cols, -1, dtype=np.int64)
    remap[used] = inverse.ravel()
    folded = SparseMatrix.from_coo(matrix.row_ids(), remap[matrix.indices], matrix.data, (matrix.rows, keys.shape[0]))
    return folded, keys


def _residual_tape(spec, param_count, matrix, node_inputs, offset, param_indices=None):
    folded, points = _network_columns(matrix, node_inputs)
    builder = TapeBuilder(param_count)
    params = builder.inputs if param_indices is None else np.asarray(param_indices)
    kappa = register_network(builder, spec, params, points)
    r = builder.add(Linear(folded, offset), kappa)
    builder.add(SumOfSquares(r.size), r)
    return builder.build()


def build_poisson_fd_loss(grid: Grid2D, obs: Observations, spec: NetworkSpec, param_indices=None):
    """``sum_ij (F_ij(u_obs; kappa_theta(u_obs)) - f_obs_ij)^2`` over interior nodes.

    The network sees the observed state at each node; nodes with identical
    observed values share one network evaluation.
    """
    if spec.input_dim != 1:
        raise ValueError("the state-dependent coefficient network takes a scalar input")
    s = flux_matrix_in_kappa(grid, obs.u)
    return _residual_tape(spec, spec.n_params, s, obs.u, -np.asarray(obs.f)[grid.interior], param_indices)


def build_heat_loss(grid: Grid2D, obs: Observations, spec: NetworkSpec, param_indices=None):
    """Implicit-Euler residuals summed over every step of the snapshot series."""
    if spec.input_dim != 2:
        raise ValueError("the spatial coefficient network takes (x, y) inputs")
    snaps, srcs, dt = obs.snapshots, obs.sources, obs.dt
    if snaps is None or srcs is None or dt is None or snaps.shape[0] < 2:
        raise ValueError("heat loss needs at least two snapshots, their sources and dt")
    inner = grid.interior
    blocks, offsets = [], []
    for n in range(snaps.shape[0] - 1):
        s = flux_matrix_in_kappa(grid, snaps[n + 1])
        blocks.append(s)
        offsets.append((snaps[n + 1][inner] - snaps[n][inner]) / dt - srcs[n + 1][inner])
    rows = np.concatenate([b.row_ids() + k * inner.size for k, b in enumerate(blocks)])
    cols = np.concatenate([b.indices for b in blocks])
    vals = -np.concatenate([b.data for b in blocks])
    stacked = SparseMatrix.from_coo(rows, cols, vals, (inner.size * len(blocks), grid.n_nodes))
    return _residual_tape(spec, spec.n_params, stacked, grid.coords, np.concatenate(offsets), param_indices)


def build_dnn_only_loss(inputs, targets, spec: NetworkSpec, param_indices=None):
    """``sum_p (kappa_theta(x_p) - kappa(x_p))^2`` with no PDE in the loop."""
    inputs = np.asarray(inputs, dtype=float).reshape(-1, spec.input_dim)
    targets = np.asarray(targets, dtype=float).ravel()
    eye = SparseMatrix.identity(inputs.shape[0])
    return _residual_tape(spec, spec.n_params, eye, inputs, -targets, param_indices)
