"""Uniform grids on the unit square and the averaged-coefficient five-point flux stencil.

Node ``(i, j)`` sits at ``(i*h, j*h)`` and has flat index ``i*(n+1) + j``.
For a node field ``w`` and node coefficients ``k`` the stencil at an interior
node is

    F_ij = [ (k_{i+1,j}+k_ij)/2 (w_{i+1,j}-w_ij) - (k_ij+k_{i-1,j})/2 (w_ij-w_{i-1,j})
           + (k_{i,j+1}+k_ij)/2 (w_{i,j+1}-w_ij) - (k_ij+k_{i,j-1})/2 (w_ij-w_{i,j-1}) ] / h^2

which is bilinear in ``(k, w)``: :func:`flux_matrix_in_kappa` fixes ``w`` and
:func:`variable_laplacian` fixes ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg

from ..linalg import SparseMatrix


@dataclass(frozen=True)
class Grid2D:
    n: int  # cells per side

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("grid needs at least 2 cells per side")

    @property
    def h(self):
        return 1.0 / self.n

    @property
    def n_nodes(self):
        return (self.n + 1) ** 2

    @property
    def coords(self):
        """Node coordinates, shape ``(n_nodes, 2)``."""
        t = np.linspace(0.0, 1.0, self.n + 1)
        x, y = np.meshgrid(t, t, indexing="ij")
        return np.column_stack([x.ravel(), y.ravel()])

    def node(self, i, j):
        return np.asarray(i) * (self.n + 1) + np.asarray(j)

    @property
    def interior_mask(self):
        m = np.zeros((self.n + 1, self.n + 1), dtype=bool)
        m[1:-1, 1:-1] = True
        return m.ravel()

    @property
    def interior(self):
        return np.flatnonzero(self.interior_mask)

    @classmethod
    def from_spacing(cls, h):
        n = int(round(1.0 / h))
        if abs(n * h - 1.0) > 1e-12:
            raise ValueError(f"spacing {h} does not divide the unit interval")
        return cls(n)


def _interior_ij(grid):
    idx = np.arange(1, grid.n)
    i, j = np.meshgrid(idx, idx, indexing="ij")
    return i.ravel(), j.ravel()


def apply_flux_stencil(grid: Grid2D, kappa, w):
    """Straight-line evaluation of the stencil at every interior node."""
    k = np.asarray(kappa, dtype=float).reshape(grid.n + 1, grid.n + 1)
    u = np.asarray(w, dtype=float).reshape(grid.n + 1, grid.n + 1)
    c = (slice(1, -1), slice(1, -1))
    east = 0.5 * (k[2:, 1:-1] + k[c]) * (u[2:, 1:-1] - u[c])
    west = 0.5 * (k[c] + k[:-2, 1:-1]) * (u[c] - u[:-2, 1:-1])
    north = 0.5 * (k[1:-1, 2:] + k[c]) * (u[1:-1, 2:] - u[c])
    south = 0.5 * (k[c] + k[1:-1, :-2]) * (u[c] - u[1:-1, :-2])
    return ((east - west + north - south) / grid.h**2).ravel()


def flux_matrix_in_kappa(grid: Grid2D, w) -> SparseMatrix:
    """Matrix ``S(w)`` (interior x nodes) with ``F = S(w) @ kappa``."""
    u = np.asarray(w, dtype=float).reshape(grid.n + 1, grid.n + 1)
    i, j = _interior_ij(grid)
    row = np.arange(i.size)
    s = 0.5 / grid.h**2
    de = u[i + 1, j] - u[i, j]
    dw = u[i, j] - u[i - 1, j]
    dn = u[i, j + 1] - u[i, j]
    ds = u[i, j] - u[i, j - 1]
    rows = np.concatenate([row] * 5)
    cols = np.concatenate([
        grid.node(i, j), grid.node(i + 1, j), grid.node(i - 1, j), grid.node(i, j + 1), grid.node(i, j - 1),
    ])
    vals = s * np.concatenate([de - dw + dn - ds, de, -dw, dn, -ds])
    return SparseMatrix.from_coo(rows, cols, vals, (i.size, grid.n_nodes))


def variable_laplacian(grid: Grid2D, kappa) -> SparseMatrix:
    """Matrix ``L(kappa)`` (interior x nodes) with ``F = L(kappa) @ w``."""
    k = np.asarray(kappa, dtype=float).reshape(grid.n + 1, grid.n + 1)
    i, j = _interior_ij(grid)
    row = np.arange(i.size)
    s = 0.5 / grid.h**2
    ke = k[i + 1, j] + k[i, j]
    kw = k[i, j] + k[i - 1, j]
    kn = k[i, j + 1] + k[i, j]
    ks = k[i, j] + k[i, j - 1]
    rows = np.concatenate([row] * 5)
    cols = np.concatenate([
        grid.node(i, j), grid.node(i + 1, j), grid.node(i - 1, j), grid.node(i, j + 1), grid.node(i, j - 1),
    ])
    vals = s * np.concatenate([-(ke + kw + kn + ks), ke, kw, kn, ks])
    return SparseMatrix.from_coo(rows, cols, vals, (i.size, grid.n_nodes))


def solve_nonlinear_poisson(grid: Grid2D, kappa, dkappa, f_interior, tol=1e-12, max_iter=50):
    """Newton solve of ``F(u; kappa(u)) = f`` with ``u = 0`` on the boundary.

    ``kappa``/``dkappa`` are callables of the state.  Returns node values.
    """
    u = np.zeros(grid.n_nodes)
    inner = grid.interior
    f_interior = np.asarray(f_interior, dtype=float)
    for _ in range(max_iter):
        k = kappa(u)
        lap = variable_laplacian(grid, k).to_scipy()
        res = lap @ u - f_interior
        jac = lap + flux_matrix_in_kappa(grid, u).to_scipy() @ scipy.sparse.diags(dkappa(u))
        du = scipy.sparse.linalg.spsolve(jac[:, inner].tocsc(), -res)
        u[inner] += du
        if np.linalg.norm(du, np.inf) <= tol * max(1.0, np.linalg.norm(u, np.inf)):
            return u
    raise RuntimeError(f"Newton iteration for the nonlinear Poisson problem did not converge on n={grid.n}")
