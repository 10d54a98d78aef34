"""Stage primitives: forward map, Jacobian and weighted second-order term.

Every primitive ``G`` maps a slice of the live vector ``x`` to fresh outputs
``y = G(x)`` and supplies

* ``jacobian(ctx)``           -- ``dG/dx`` as a :class:`SparseMatrix`,
* ``pullback(ctx, m)``         -- the dense product ``m @ dG/dx``,
* ``weighted_hessian(ctx, w)`` -- ``d^2 (w^T G) / dx^2`` with ``w`` frozen.

``ctx`` is whatever ``forward`` saved; for most rules it is just ``x``.
Weighted Hessians are returned either as :class:`Triplets` listing every
stored entry (both triangles) or as a dense symmetric array.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .linalg import SparseMatrix, sparse_matvec


class UnsupportedPrimitive(NotImplementedError):
    pass


class Triplets(NamedTuple):
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    @classmethod
    def empty(cls):
        e = np.zeros(0, dtype=np.int64)
        return cls(e, e, np.zeros(0))

    def to_dense(self, n):
        out = np.zeros((n, n))
        np.add.at(out, (self.rows, self.cols), self.vals)
        return out


def weighted_hessian_dense(z, n):
    """Densify whatever ``weighted_hessian`` returned."""
    if isinstance(z, Triplets):
        return z.to_dense(n)
    return np.asarray(z, dtype=float)


class Primitive:
    kind = "primitive"
    linear = False

    def __init__(self, n_in, n_out):
        self.n_in = int(n_in)
        self.n_out = int(n_out)

    def evaluate(self, x):
        raise NotImplementedError

    def forward(self, x):
        return self.evaluate(x), x

    def jacobian(self, ctx) -> SparseMatrix:
        raise UnsupportedPrimitive(f"primitive {self.kind!r} has no Jacobian rule")

    def pullback(self, ctx, m):
        return self.jacobian(ctx).left_multiply(m)

    def weighted_hessian(self, ctx, ybar):
        if self.linear:
            return Triplets.empty()
        raise UnsupportedPrimitive(f"primitive {self.kind!r} has no second-order rule")

    def __repr__(self):
        return f"{type(self).__name__}({self.kind}, {self.n_in}->{self.n_out})"


class Elementwise(Primitive):
    """``y_i = f(x_i)`` with closed-form first and second derivatives."""

    def __init__(self, kind, n, f, df, d2f):
        super().__init__(n, n)
        self.kind = kind
        self._f, self._df, self._d2f = f, df, d2f

    def evaluate(self, x):
        return self._f(x)

    def jacobian(self, x):
        n = self.n_in
        return SparseMatrix(n, n, np.arange(n + 1), np.arange(n), self._df(x))

    def pullback(self, x, m):
        return m * self._df(x)

    def diagonal(self, x):
        return self._df(x)

    def weighted_hessian(self, x, ybar):
        idx = np.arange(self.n_in)
        return Triplets(idx, idx, ybar * self._d2f(x))


def _tanh_d1(x):
    return 1.0 - np.tanh(x) ** 2


def _tanh_d2(x):
    t = np.tanh(x)
    return -2.0 * t * (1.0 - t * t)


_ELEMENTWISE = {
    "tanh": (np.tanh, _tanh_d1, _tanh_d2),
    "square": (np.square, lambda x: 2.0 * x, lambda x: np.full_like(x, 2.0)),
    "sin": (np.sin, np.cos, lambda x: -np.sin(x)),
    "cos": (np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x)),
    "exp": (np.exp, np.exp, np.exp),
}


def elementwise(kind, n):
    try:
        f, df, d2f = _ELEMENTWISE[kind]
    except KeyError:
        raise UnsupportedPrimitive(f"unknown elementwise primitive {kind!r}") from None
    return Elementwise(kind, n, f, df, d2f)


def tanh(n):
    return elementwise("tanh", n)


def square(n):
    return elementwise("square", n)


class Affine(Primitive):
    """Batched affine layer ``y_p = W x_p + b`` for ``p = 1..points``.

    Input layout is ``[W (n_out x n_in, row-major), b (n_out), X (points x n_in)]``
    and the output is ``Y (points x n_out)``; every block is differentiable.
    """

    kind = "affine"

    def __init__(self, n_in, n_out, points=1):
        self.fan_in = int(n_in)
        self.fan_out = int(n_out)
        self.points = int(points)
        self.n_w = self.fan_out * self.fan_in
        super().__init__(self.n_w + self.fan_out + self.points * self.fan_in, self.points * self.fan_out)

    def split(self, x):
        w = x[: self.n_w].reshape(self.fan_out, self.fan_in)
        b = x[self.n_w : self.n_w + self.fan_out]
        xs = x[self.n_w + self.fan_out :].reshape(self.points, self.fan_in)
        return w, b, xs

    def evaluate(self, x):
        w, b, xs = self.split(x)
        return (xs @ w.T + b).ravel()

    def jacobian(self, x):
        w, _, xs = self.split(x)
        P, no, ni = self.points, self.fan_out, self.fan_in
        p, i, j = np.meshgrid(np.arange(P), np.arange(no), np.arange(ni), indexing="ij")
        row = (p * no + i).ravel()
        cols = [
            (i * ni + j).ravel(),  # dy_pi / dW_ij = x_pj
            (self.n_w + self.fan_out + p * ni + j).ravel(),  # dy_pi / dx_pj = W_ij
        ]
        vals = [xs[p, j].ravel(), w[i, j].ravel()]
        pb, ib = np.meshgrid(np.arange(P), np.arange(no), indexing="ij")
        rows = [row, row, (pb * no + ib).ravel()]
        cols.append((self.n_w + ib).ravel())
        vals.append(np.ones(P * no))
        return SparseMatrix.from_coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (self.n_out, self.n_in))

    def pullback(self, x, m):
        w, _, xs = self.split(x)
        m = np.asarray(m, dtype=float)
        k = m.shape[0]
        P, no, ni = self.points, self.fan_out, self.fan_in
        if m.strides[-1] != m.itemsize:
            m = np.ascontiguousarray(m)
        m3 = m.reshape(k, P, no)  # a view, so column slices of H are not copied
        out = np.empty((k, self.n_in))
        # each block is written in place through a reshaped view of ``out``
        np.matmul(m3.transpose(0, 2, 1), xs, out=out[:, : self.n_w].reshape(k, no, ni))  # dW_ij = sum_p m_pi x_pj
        np.matmul(np.ones(P), m3, out=out[:, self.n_w : self.n_w + no])  # db_i = sum_p m_pi
        np.matmul(m3, w, out=out[:, self.n_w + no :].reshape(k, P, ni))  # dx_pj = sum_i m_pi W_ij
        return out

    def weighted_hessian(self, x, ybar):
        # only the mixed W-x block survives: d^2(ybar^T y)/dW_ij dx_pk = ybar_pi delta_jk
        P, no, ni = self.points, self.fan_out, self.fan_in
        p, i, j = np.meshgrid(np.arange(P), np.arange(no), np.arange(ni), indexing="ij")
        r = (i * ni + j).ravel()
        c = (self.n_w + no + p * ni + j).ravel()
        v = np.asarray(ybar).reshape(P, no)[p, i].ravel()
        return Triplets(np.concatenate([r, c]), np.concatenate([c, r]), np.concatenate([v, v]))


class SumOfSquares(Primitive):
    kind = "sum_of_squares"

    def __init__(self, n):
        super().__init__(n, 1)

    def evaluate(self, r):
        return np.array([np.dot(r, r)])

    def jacobian(self, r):
        n = self.n_in
        return SparseMatrix(1, n, np.array([0, n]), np.arange(n), 2.0 * r)

    def pullback(self, r, m):
        return np.asarray(m)[:, :1] * (2.0 * r)

    def weighted_hessian(self, r, ybar):
        idx = np.arange(self.n_in)
        return Triplets(idx, idx, np.full(self.n_in, 2.0 * float(ybar[0])))


class Linear(Primitive):
    """Constant sparse linear map with offset, ``y = S x + c``."""

    kind = "linear"
    linear = True

    def __init__(self, matrix: SparseMatrix, offset=None):
        super().__init__(matrix.cols, matrix.rows)
        self.matrix = matrix
        self.offset = np.zeros(matrix.rows) if offset is None else np.asarray(offset, dtype=float)
        if self.offset.shape != (matrix.rows,):
            raise ValueError("offset length must match the number of matrix rows")
        self._csr = matrix.to_scipy()

    def evaluate(self, x):
        return sparse_matvec(self.matrix, x) + self.offset

    def jacobian(self, x):
        return self.matrix

    def pullback(self, x, m):
        return np.asarray((self._csr.T @ np.asarray(m, dtype=float).T).T)


class Gather(Primitive):
    """``y_k = x[indices[k]]``; indices may repeat."""

    kind = "gather"
    linear = True

    def __init__(self, indices, n_in):
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size and (indices.min() < 0 or indices.max() >= n_in):
            raise IndexError(f"gather index out of bounds for input of size {n_in}")
        super().__init__(n_in, indices.size)
        self.indices = indices

    def evaluate(self, x):
        return x[self.indices]

    def jacobian(self, x):
        n = self.n_out
        return SparseMatrix(n, self.n_in, np.arange(n + 1), self.indices, np.ones(n))

    def pullback(self, x, m):
        m = np.asarray(m, dtype=float)
        out = np.zeros((m.shape[0], self.n_in))
        np.add.at(out.T, self.indices, m.T)
        return out


class ScatterAdd(Primitive):
    """``y[indices[k]] += x_k`` into a zero vector of length ``n_out``."""

    kind = "scatter_add"
    linear = True

    def __init__(self, indices, n_out):
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size and (indices.min() < 0 or indices.max() >= n_out):
            raise IndexError(f"scatter index out of bounds for output of size {n_out}")
        super().__init__(indices.size, n_out)
        self.indices = indices

    def evaluate(self, x):
        return np.bincount(self.indices, weights=x, minlength=self.n_out).astype(float)

    def jacobian(self, x):
        return SparseMatrix.from_coo(self.indices, np.arange(self.n_in), np.ones(self.n_in), (self.n_out, self.n_in))

    def pullback(self, x, m):
        return np.asarray(m, dtype=float)[:, self.indices]


class Constant(Primitive):
    """Injects fixed data into the live vector; has no inputs."""

    kind = "constant"
    linear = True

    def __init__(self, values):
        values = np.asarray(values, dtype=float).ravel()
        super().__init__(0, values.size)
        self.values = values

    def evaluate(self, x):
        return self.values.copy()

    def jacobian(self, x):
        return SparseMatrix(self.n_out, 0, np.zeros(self.n_out + 1), np.zeros(0), np.zeros(0))

    def pullback(self, x, m):
        return np.zeros((np.shape(m)[0], 0))
