import numpy as np
import pytest

from hesspcl.linalg import SingularMatrixError
from hesspcl.primitives import Gather, Linear, SumOfSquares
from hesspcl.linalg import SparseMatrix
from hesspcl.sparse_solver import (
    SolvePattern,
    SparseSolve,
    solve_forward,
    solve_jacobian,
    solve_jacobian_dense,
    solve_weighted_hessian,
)
from hesspcl.tape import TapeBuilder, gradient, hessian
from hesspcl.verify import _random_pattern, fd_hessian, fd_jacobian, rel_err


def diag_pattern(n, rhs):
    return SolvePattern(n, np.arange(n), np.arange(n), np.asarray(rhs, dtype=float))


def test_forward_examples():
    u, _ = solve_forward([2.0, 2.0], diag_pattern(2, [2.0, 4.0]))
    assert np.allclose(u, [1, 2])
    f = np.array([0.3, -1.0, 2.0])
    assert np.allclose(solve_forward(np.ones(3), diag_pattern(3, f))[0], f)


def test_forward_residual_spd():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((5, 5))
    a = a @ a.T + 5 * np.eye(5)
    rows, cols = np.nonzero(np.ones((5, 5)))
    f = rng.standard_normal(5)
    u, _ = solve_forward(a[rows, cols], SolvePattern(5, rows, cols, f))
    assert np.linalg.norm(a @ u - f) <= 1e-10 * (np.linalg.norm(a) * np.linalg.norm(u) + np.linalg.norm(f))


def test_singular_matrix_reports_condition():
    with pytest.raises(SingularMatrixError, match="condition"):
        solve_forward([1.0, 0.0], diag_pattern(2, [1.0, 1.0]))


def test_jacobian_column_example():
    pattern = diag_pattern(2, [2.0, 4.0])
    _, cache = solve_forward([2.0, 2.0], pattern)
    j = solve_jacobian_dense(cache, pattern)
    assert np.allclose(j[:, 0], [-0.5, 0.0])
    assert solve_jacobian(cache, pattern).shape == (2, 2)


def test_zero_state_component_gives_zero_column():
    rows, cols = np.array([0, 0, 1]), np.array([0, 1, 1])
    pattern = SolvePattern(2, rows, cols, np.array([1.0, 0.0]))  # u_1 = 0
    _, cache = solve_forward([1.0, 0.5, 2.0], pattern)
    assert np.all(solve_jacobian_dense(cache, pattern)[:, 1] == 0)


def test_weighted_hessian_scalar_reciprocal():
    pattern = diag_pattern(2, [1.0, 0.0])
    _, cache = solve_forward([1.0, 1.0], pattern)
    z = solve_weighted_hessian(cache, np.array([1.0, 0.0]), pattern)
    assert z[0, 0] == pytest.approx(2.0)
    assert np.all(solve_weighted_hessian(cache, np.zeros(2), pattern) == 0)


def test_diagonal_pattern_closed_form():
    a = np.array([1.5, 0.7, 2.2])
    f = np.array([1.0, -2.0, 0.5])
    y = np.array([0.3, 1.1, -0.4])
    pattern = diag_pattern(3, f)
    _, cache = solve_forward(a, pattern)
    assert np.allclose(solve_jacobian_dense(cache, pattern), np.diag(-f / a**2))
    assert np.allclose(solve_weighted_hessian(cache, y, pattern), np.diag(2 * y * f / a**3))


@pytest.mark.parametrize("seed", range(10))
def test_random_systems_against_finite_differences(seed):
    rng = np.random.default_rng(seed)
    pattern, values = _random_pattern(rng, 5)
    _, cache = solve_forward(values, pattern)
    jac = solve_jacobian_dense(cache, pattern)
    assert rel_err(jac, fd_jacobian(lambda v: solve_forward(v, pattern)[0], values)) <= 1e-6
    y = rng.standard_normal(5)
    z = solve_weighted_hessian(cache, y, pattern)
    fd = fd_hessian(lambda v: solve_jacobian_dense(solve_forward(v, pattern)[1], pattern).T @ y, values)
    assert np.abs(z - fd).max() <= 1e-5 * (1 + np.abs(z).max())
    assert np.array_equal(z, z.T)


def test_end_to_end_tape_through_solve():
    rng = np.random.default_rng(4)
    pattern, values = _random_pattern(rng, 4)
    d = pattern.d
    b = TapeBuilder(d)
    a = b.add(Gather(np.arange(d), d), b.inputs)
    u = b.add(SparseSolve(pattern), a)
    r = b.add(Linear(SparseMatrix.identity(4), -rng.standard_normal(4)), u)
    b.add(SumOfSquares(4), r)
    tape = b.build()
    h = hessian(tape, values).to_dense()
    fd = fd_hessian(lambda v: gradient(tape, v), values)
    assert np.abs(h - fd).max() <= 1e-5 * (1 + np.abs(h).max())


def test_pattern_validation():
    with pytest.raises(ValueError):
        SolvePattern(2, [0, 0], [1, 1], np.ones(2))
    with pytest.raises(ValueError):
        SolvePattern(2, [0, 2], [0, 1], np.ones(2))
