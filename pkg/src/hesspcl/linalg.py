"""Dense and sparse linear-algebra kernels shared by the rest of the package.

Matrices that are plain dense work arrays are ``numpy.ndarray`` objects.  Two
small containers carry structure: :class:`SymmetricMatrix` (packed lower
triangle) for Hessians and :class:`SparseMatrix` (CSR) for stiffness matrices
and stage Jacobians.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.linalg import lapack

TINY = 1e-300
JACOBI_MAX_DIM = 128


class LinAlgError(Exception):
    pass


class SingularMatrixError(LinAlgError):
    """Raised when a matrix is singular to working precision."""

    def __init__(self, message, rcond=0.0):
        super().__init__(message)
        self.rcond = rcond


class ConvergenceError(LinAlgError):
    pass


class NotPositiveDefinite(LinAlgError):
    """Signals that a shifted Cholesky factorization broke down.

    ``pivot`` is the zero-based index of the first non-positive pivot.
    """

    def __init__(self, pivot, shift):
        super().__init__(f"matrix + {shift:g}*I is not positive definite (pivot {pivot})")
        self.pivot = pivot
        self.shift = shift


@lru_cache(maxsize=8)
def _tril(n):
    rows, cols = np.tril_indices(n)
    rows.flags.writeable = False
    cols.flags.writeable = False
    return rows, cols, rows * n + cols, cols * n + rows


class SymmetricMatrix:
    """Symmetric matrix stored as its packed lower triangle (row-major)."""

    __slots__ = ("dim", "entries")

    def __init__(self, dim, entries):
        entries = np.asarray(entries, dtype=float)
        if dim < 0 or entries.shape != (dim * (dim + 1) // 2,):
            raise ValueError(f"packed storage for dim {dim} needs {dim * (dim + 1) // 2} entries")
        if not np.all(np.isfinite(entries)):
            raise ValueError("symmetric matrix entries must be finite")
        self.dim = dim
        self.entries = entries

    @classmethod
    def from_dense(cls, a):
        """Pack ``a``; the off-diagonal part is averaged with its transpose."""
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        n = a.shape[0]
        _, _, lower, upper = _tril(n)
        flat = a.ravel()
        return cls(n, 0.5 * (flat[lower] + flat[upper]))

    @classmethod
    def zeros(cls, dim):
        return cls(dim, np.zeros(dim * (dim + 1) // 2))

    def to_dense(self):
        n = self.dim
        out = np.empty(n * n)
        _, _, lower, upper = _tril(n)
        out[lower] = self.entries
        out[upper] = self.entries
        return out.reshape(n, n)

    def __getitem__(self, key):
        i, j = key
        if i < j:
            i, j = j, i
        return self.entries[i * (i + 1) // 2 + j]

    def scaled(self, factor):
        return SymmetricMatrix(self.dim, factor * self.entries)

    def norm_max(self):
        return float(np.max(np.abs(self.entries))) if self.entries.size else 0.0

    def __repr__(self):
        return f"SymmetricMatrix(dim={self.dim})"


@dataclass(frozen=True)
class SparseMatrix:
    """Compressed sparse row matrix with sorted, duplicate-free columns per row."""

    rows: int
    cols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        indptr = np.asarray(self.indptr, dtype=np.int64)
        indices = np.asarray(self.indices, dtype=np.int64)
        data = np.asarray(self.data, dtype=float)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "data", data)
        if indptr.shape != (self.rows + 1,) or indptr[0] != 0 or np.any(np.diff(indptr) < 0):
            raise ValueError("row pointers must be nondecreasing with length rows + 1")
        if indptr[-1] != indices.size or indices.size != data.size:
            raise ValueError("row pointers, column indices and values disagree in length")
        if indices.size and (indices.min() < 0 or indices.max() >= self.cols):
            raise ValueError("column index out of bounds")
        # strictly increasing within a row <=> every in-row step is positive
        steps = np.diff(indices)
        row_breaks = np.zeros(max(indices.size - 1, 0), dtype=bool)
        starts = indptr[1:-1]
        starts = starts[(starts > 0) & (starts < indices.size)]
        row_breaks[starts - 1] = True
        if np.any((steps <= 0) & ~row_breaks):
            raise ValueError("column indices must be strictly increasing within each row")
        if not np.all(np.isfinite(data)):
            raise ValueError("sparse values must be finite")

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def nnz(self):
        return int(self.data.size)

    @classmethod
    def from_coo(cls, row, col, val, shape):
        """Build from triplets; duplicates are summed."""
        m = scipy.sparse.coo_matrix(
            (np.asarray(val, dtype=float), (np.asarray(row), np.asarray(col))), shape=shape
        ).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        return cls(shape[0], shape[1], m.indptr, m.indices, m.data)

    @classmethod
    def from_dense(cls, a, keep_zeros=False):
        a = np.asarray(a, dtype=float)
        mask = np.ones(a.shape, dtype=bool) if keep_zeros else a != 0
        r, c = np.nonzero(mask)
        return cls.from_coo(r, c, a[r, c], a.shape)

    @classmethod
    def identity(cls, n):
        return cls(n, n, np.arange(n + 1), np.arange(n), np.ones(n))

    def row_ids(self):
        return np.repeat(np.arange(self.rows), np.diff(self.indptr))

    def to_scipy(self):
        return scipy.sparse.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def left_multiply(self, m):
        """Return ``m @ self`` for a dense ``m`` of shape (k, rows)."""
        m = np.asarray(m, dtype=float)
        return np.asarray((self.to_scipy().T @ m.T).T)


def sparse_to_dense(s: SparseMatrix) -> np.ndarray:
    out = np.zeros(s.shape)
    out[s.row_ids(), s.indices] = s.data
    return out


def sparse_matvec(s: SparseMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (s.cols,):
        raise ValueError(f"matvec dimension mismatch: matrix has {s.cols} columns, vector has {x.shape}")
    return np.bincount(s.row_ids(), weights=s.data * x[s.indices], minlength=s.rows)


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def _as_dense_symmetric(m):
    if isinstance(m, SymmetricMatrix):
        return m.to_dense()
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return 0.5 * (a + a.T)


def jacobi_eigen(a, tol=1e-15, max_sweeps=100):
    """Cyclic Jacobi eigen-decomposition of a dense symmetric matrix.

    Returns ``(eigenvalues, eigenvectors)`` unsorted.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(np.linalg.norm(a), TINY)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale:
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= TINY or abs(apq) <= 1e-18 * scale:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q]
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :]
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    raise ConvergenceError(f"Jacobi eigensolver did not converge for a {n}x{n} matrix in {max_sweeps} sweeps")


def sym_eigen(m, method="auto") -> EigenDecomposition:
    """Full spectral decomposition of a symmetric matrix, eigenvalues ascending.

    ``method`` is ``"jacobi"``, ``"lapack"`` or ``"auto"``; ``auto`` uses the
    Jacobi sweep up to ``JACOBI_MAX_DIM`` and LAPACK ``syevd`` above it.
    """
    a = _as_dense_symmetric(m)
    n = a.shape[0]
    if n < 1:
        raise ValueError("sym_eigen needs dim >= 1")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    if method == "auto":
        method = "jacobi" if n <= JACOBI_MAX_DIM else "lapack"
    if method == "jacobi":
        w, v = jacobi_eigen(a)
    elif method == "lapack":
        try:
            w, v = np.linalg.eigh(a)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"LAPACK eigensolver failed for a {n}x{n} matrix") from exc
    else:
        raise ValueError(f"unknown eigen method {method!r}")
    order = np.argsort(w, kind="stable")
    return EigenDecomposition(w[order], v[:, order])


def cholesky_shifted(m, shift=0.0) -> np.ndarray:
    """Lower Cholesky factor of ``m + shift*I``; only the lower triangle of ``m`` is read.

    Raises :class:`NotPositiveDefinite` carrying the failed pivot when the
    shifted matrix is not positive definite.
    """
    if not np.isfinite(shift):
        raise ValueError("shift must be finite")
    if isinstance(m, SymmetricMatrix):
        a = np.asfortranarray(m.to_dense())
    else:
        a = np.array(m, dtype=float, order="F")
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
    a[np.diag_indices_from(a)] += shift
    factor, info = lapack.dpotrf(a, lower=1, clean=1, overwrite_a=1)
    if info > 0:
        raise NotPositiveDefinite(info - 1, shift)
    if info < 0:
        raise ValueError(f"dpotrf rejected argument {-info}")
    return factor


class LUFactor:
    """Partial-pivoting LU factorization with a 1-norm condition estimate."""

    def __init__(self, a):
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        n = a.shape[0]
        self.n = n
        anorm = np.linalg.norm(a, 1) if n else 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            self.lu, self.piv = scipy.linalg.lu_factor(a, check_finite=True)
        if n and np.any(np.diag(self.lu) == 0.0):
            self.rcond = 0.0
        elif n:
            self.rcond, _ = lapack.dgecon(self.lu, max(anorm, TINY), norm="1")
        else:
            self.rcond = 1.0
        if self.rcond < np.finfo(float).eps:
            raise SingularMatrixError(
                f"{n}x{n} matrix is singular to working precision "
                f"(1-norm condition estimate {1.0 / max(self.rcond, TINY):.3e})",
                rcond=self.rcond,
            )

    def solve(self, b, transpose=False):
        return scipy.linalg.lu_solve((self.lu, self.piv), b, trans=1 if transpose else 0)

    def inverse(self):
        return self.solve(np.eye(self.n))


def dense_solve(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or b.shape[0] != a.shape[0]:
        raise ValueError(f"dense_solve shape mismatch: {a.shape} vs {b.shape}")
    return LUFactor(a).solve(b)
