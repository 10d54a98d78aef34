"""Second-order rules for the stage ``u = A^{-1} f`` with the nonzero entries of
``A`` as inputs and ``f`` held fixed.

For an entry ``a_l`` at position ``(i_l, j_l)`` of the fixed sparsity pattern

    du/da_l            = -A^{-1}[:, i_l] * u[j_l]
    d^2(y^T u)/da_r da_l = -(z[i_l] * du_{j_l}/da_r + z[i_r] * du_{j_r}/da_l),   z = A^{-T} y

so one dense inverse gives every Jacobian column and the weighted Hessian
costs O(d^2) for d pattern entries.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import LUFactor, SingularMatrixError, SparseMatrix
from .primitives import Primitive


@dataclass(frozen=True)
class SolvePattern:
    """Fixed sparsity pattern ``(rows[l], cols[l])`` of an ``n x n`` matrix and the right-hand side."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        rhs = np.asarray(self.rhs, dtype=float)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "rhs", rhs)
        if rows.shape != cols.shape or rows.ndim != 1:
            raise ValueError("pattern rows and cols must be equal-length vectors")
        if rhs.shape != (self.n,):
            raise ValueError(f"right-hand side must have length {self.n}")
        if rows.size and (min(rows.min(), cols.min()) < 0 or max(rows.max(), cols.max()) >= self.n):
            raise ValueError("pattern entry outside the matrix")
        if np.unique(rows * self.n + cols).size != rows.size:
            raise ValueError("pattern contains duplicate entries")

    @property
    def d(self):
        return int(self.rows.size)

    def assemble(self, values):
        a = np.zeros((self.n, self.n))
        a[self.rows, self.cols] = values
        return a


@dataclass
class SolveCache:
    """Per-forward state kept for the backward pass."""

    values: np.ndarray
    u: np.ndarray
    lu: LUFactor
    inverse: np.ndarray


def solve_forward(values, pattern: SolvePattern):
    """Return ``(u, cache)`` with ``A u = f`` for ``A`` assembled from ``values``."""
    values = np.asarray(values, dtype=float)
    if values.shape != (pattern.d,):
        raise ValueError(f"expected {pattern.d} matrix values, got shape {values.shape}")
    a = pattern.assemble(values)
    try:
        lu = LUFactor(a)
    except SingularMatrixError as exc:
        raise SingularMatrixError(f"sparse solve: {exc}", rcond=exc.rcond) from exc
    u = lu.solve(pattern.rhs)
    return u, SolveCache(values, u, lu, lu.inverse())


def solve_jacobian_dense(cache: SolveCache, pattern: SolvePattern):
    """``n x d`` matrix whose column ``l`` is ``du/da_l``."""
    return -cache.inverse[:, pattern.rows] * cache.u[pattern.cols]


def solve_jacobian(cache: SolveCache, pattern: SolvePattern) -> SparseMatrix:
    return SparseMatrix.from_dense(solve_jacobian_dense(cache, pattern), keep_zeros=True)


def solve_weighted_hessian(cache: SolveCache, y, pattern: SolvePattern, du=None):
    """Dense ``d x d`` matrix of ``d^2 (y^T u) / da_r da_l``."""
    if du is None:
        du = solve_jacobian_dense(cache, pattern)
    z = cache.lu.solve(np.asarray(y, dtype=float), transpose=True)
    t = z[pattern.rows][:, None] * du[pattern.cols, :]  # t[l, r] = z[i_l] du_{j_l}/da_r
    return -(t + t.T)


class SparseSolve(Primitive):
    kind = "sparse_solve"

    def __init__(self, pattern: SolvePattern):
        super().__init__(pattern.d, pattern.n)
        self.pattern = pattern

    def evaluate(self, values):
        return solve_forward(values, self.pattern)[0]

    def forward(self, values):
        return solve_forward(values, self.pattern)

    def jacobian(self, cache):
        return solve_jacobian(cache, self.pattern)

    def pullback(self, cache, m):
        # m @ J with J[:, l] = -Ainv[:, i_l] u[j_l]
        m = np.asarray(m, dtype=float)
        return -(m @ cache.inverse)[:, self.pattern.rows] * cache.u[self.pattern.cols]

    def weighted_hessian(self, cache, ybar):
        return solve_weighted_hessian(cache, ybar, self.pattern)
