import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hesspcl.linalg import (
    ConvergenceError,
    NotPositiveDefinite,
    SingularMatrixError,
    SparseMatrix,
    SymmetricMatrix,
    cholesky_shifted,
    dense_solve,
    jacobi_eigen,
    sparse_matvec,
    sparse_to_dense,
    sym_eigen,
)


def random_symmetric(rng, n):
    a = rng.standard_normal((n, n))
    return SymmetricMatrix.from_dense(a + a.T)


def test_symmetric_packing_roundtrip():
    a = np.array([[1.0, 2.0, 4.0], [2.0, 3.0, 5.0], [4.0, 5.0, 6.0]])
    s = SymmetricMatrix.from_dense(a)
    assert s.entries.tolist() == [1, 2, 3, 4, 5, 6]
    assert np.array_equal(s.to_dense(), a)
    assert s[0, 2] == s[2, 0] == 4


def test_symmetric_rejects_nonfinite_and_bad_length():
    with pytest.raises(ValueError):
        SymmetricMatrix(2, [1.0, np.nan, 2.0])
    with pytest.raises(ValueError):
        SymmetricMatrix(2, [1.0, 2.0])


@pytest.mark.parametrize("method", ["jacobi", "lapack"])
def test_eigen_diagonal(method):
    e = sym_eigen(SymmetricMatrix.from_dense(np.diag([2.0, 3.0])), method=method)
    assert np.allclose(e.eigenvalues, [2, 3])
    assert np.allclose(np.abs(e.eigenvectors), np.eye(2))


@pytest.mark.parametrize("method", ["jacobi", "lapack"])
def test_eigen_permutation(method):
    e = sym_eigen(SymmetricMatrix.from_dense(np.array([[0.0, 1.0], [1.0, 0.0]])), method=method)
    assert np.allclose(e.eigenvalues, [-1, 1])


@pytest.mark.parametrize("method", ["jacobi", "lapack"])
def test_eigen_reconstruction_random(method):
    rng = np.random.default_rng(3)
    m = random_symmetric(rng, 6)
    e = sym_eigen(m, method=method)
    assert np.all(np.diff(e.eigenvalues) >= 0)
    assert np.allclose(e.reconstruct(), m.to_dense(), atol=1e-10)
    assert np.allclose(e.eigenvectors.T @ e.eigenvectors, np.eye(6), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 10), seed=st.integers(0, 2**31 - 1), method=st.sampled_from(["jacobi", "lapack"]))
def test_eigen_residual_property(n, seed, method):
    m = random_symmetric(np.random.default_rng(seed), n)
    a = m.to_dense()
    e = sym_eigen(m, method=method)
    res = a @ e.eigenvectors - e.eigenvectors * e.eigenvalues
    assert np.max(np.linalg.norm(res, axis=0)) <= 1e-10 * (1 + np.linalg.norm(a, 2))


def test_jacobi_reports_nonconvergence():
    a = random_symmetric(np.random.default_rng(0), 8).to_dense()
    with pytest.raises(ConvergenceError, match="8x8"):
        jacobi_eigen(a, max_sweeps=1)


def test_eigen_needs_dimension():
    with pytest.raises(ValueError):
        sym_eigen(SymmetricMatrix.zeros(0))


def test_cholesky_examples():
    assert np.allclose(cholesky_shifted(SymmetricMatrix.from_dense(np.eye(2))), np.eye(2))
    m = SymmetricMatrix.from_dense(np.diag([-1.0, 1.0]))
    with pytest.raises(NotPositiveDefinite) as info:
        cholesky_shifted(m, 0.0)
    assert info.value.pivot == 0
    assert np.allclose(cholesky_shifted(m, 2.0), np.diag([1.0, np.sqrt(3.0)]))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 10), seed=st.integers(0, 2**31 - 1), offset=st.floats(-2.0, 2.0))
def test_cholesky_succeeds_iff_shift_exceeds_min_eigenvalue(n, seed, offset):
    m = random_symmetric(np.random.default_rng(seed), n)
    lmin = sym_eigen(m).eigenvalues[0]
    band = 1e-12 * np.abs(m.to_dense()).max()
    shift = -lmin + offset
    if abs(offset) <= band:
        return
    if offset > 0:
        l = cholesky_shifted(m, shift)
        target = m.to_dense() + shift * np.eye(n)
        assert np.linalg.norm(l @ l.T - target) <= 1e-12 * np.linalg.norm(target) * n
    else:
        with pytest.raises(NotPositiveDefinite):
            cholesky_shifted(m, shift)


def test_cholesky_rejects_nonfinite_shift():
    with pytest.raises(ValueError):
        cholesky_shifted(np.eye(2), np.inf)


def test_dense_solve_examples():
    assert np.allclose(dense_solve(np.eye(3), [1.0, 2.0, 3.0]), [1, 2, 3])
    assert np.allclose(dense_solve(2 * np.eye(2), [2.0, 4.0]), [1, 2])


def test_dense_solve_residual_random():
    rng = np.random.default_rng(5)
    for _ in range(100):
        a = rng.standard_normal((8, 8)) + 8 * np.eye(8)
        b = rng.standard_normal(8)
        x = dense_solve(a, b)
        assert np.linalg.norm(a @ x - b) <= 1e-10 * (np.linalg.norm(a) * np.linalg.norm(x) + np.linalg.norm(b))


def test_dense_solve_singular_reports_condition():
    with pytest.raises(SingularMatrixError, match="condition"):
        dense_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), [1.0, 1.0])


def test_sparse_identity_matvec_and_empty_row():
    assert np.allclose(sparse_matvec(SparseMatrix.identity(3), [1.0, 2.0, 3.0]), [1, 2, 3])
    s = SparseMatrix.from_dense(np.array([[1.0, 2.0], [0.0, 0.0]]))
    assert np.allclose(sparse_matvec(s, [1.0, 1.0]), [3, 0])
    assert np.array_equal(sparse_to_dense(s), [[1, 2], [0, 0]])


def test_sparse_random_against_dense():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((7, 5)) * (rng.random((7, 5)) < 0.4)
    x = rng.standard_normal(5)
    s = SparseMatrix.from_dense(a)
    assert np.allclose(sparse_matvec(s, x), a @ x, rtol=0, atol=1e-14)
    assert np.array_equal(sparse_to_dense(s), a)


def test_sparse_invariants_enforced():
    with pytest.raises(ValueError):
        SparseMatrix(1, 3, [0, 2], [2, 1], [1.0, 1.0])  # unsorted columns
    with pytest.raises(ValueError):
        SparseMatrix(1, 2, [0, 1], [2], [1.0])  # out of bounds
    with pytest.raises(ValueError):
        sparse_matvec(SparseMatrix.identity(2), [1.0])
