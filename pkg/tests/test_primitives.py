import numpy as np
import pytest

from hesspcl.linalg import SparseMatrix
from hesspcl.primitives import (
    Affine,
    Constant,
    Gather,
    Linear,
    ScatterAdd,
    SumOfSquares,
    UnsupportedPrimitive,
    elementwise,
    tanh,
    square,
    weighted_hessian_dense,
)
from hesspcl.verify import fd_hessian, fd_jacobian, rel_err, sample_primitives


def dense_jac(rule, x):
    x = np.asarray(x, dtype=float)
    return rule.jacobian(rule.forward(x)[1]).to_scipy().toarray()


def z_dense(rule, x, ybar):
    x = np.asarray(x, dtype=float)
    return weighted_hessian_dense(rule.weighted_hessian(rule.forward(x)[1], np.asarray(ybar, dtype=float)), rule.n_in)


def test_tanh_at_zero():
    assert np.allclose(dense_jac(tanh(1), [0.0]), [[1.0]])
    assert np.allclose(z_dense(tanh(1), [0.0], [1.0]), [[0.0]])


def test_square_rule():
    assert np.allclose(dense_jac(square(1), [3.0]), [[6.0]])
    assert np.allclose(z_dense(square(1), [3.0], [2.0]), [[4.0]])


def test_tanh_second_order_value():
    z = z_dense(tanh(1), [1.0], [2.0])[0, 0]
    closed = -2 * 2 * np.tanh(1.0) / np.cosh(1.0) ** 2
    fd = (2 * (1 - np.tanh(1 + 1e-5) ** 2) - 2 * (1 - np.tanh(1 - 1e-5) ** 2)) / 2e-5
    assert z == pytest.approx(closed, abs=1e-12)
    assert z == pytest.approx(-1.27940, abs=5e-6)
    assert z == pytest.approx(fd, rel=1e-8)


def test_unknown_elementwise_kind():
    with pytest.raises(UnsupportedPrimitive, match="softplus"):
        elementwise("softplus", 2)


def test_affine_identity_is_linear_in_x():
    rule = Affine(2, 2, points=1)
    x = np.concatenate([np.eye(2).ravel(), [0.0, 0.0], [0.3, -0.7]])
    assert np.allclose(rule.evaluate(x), [0.3, -0.7])
    z = z_dense(rule, x, [1.0, 1.0])
    xs = slice(6, 8)
    assert np.all(z[xs, xs] == 0)
    assert np.all(z[:4, :4] == 0)  # pure-W
    assert np.all(z[4:6, :] == 0)  # anything with b


def test_affine_scalar_mixed_entry():
    rule = Affine(1, 1, points=1)
    x = np.array([0.4, 0.1, 2.0])  # w, b, x
    z = z_dense(rule, x, [3.0])
    assert z[0, 2] == z[2, 0] == 3.0
    fd = fd_hessian(lambda v: 3.0 * dense_jac(rule, v)[0], x)
    assert np.allclose(z, fd, atol=1e-8)


def test_affine_bias_jacobian_is_identity():
    rule = Affine(3, 2, points=2)
    x = np.random.default_rng(0).standard_normal(rule.n_in)
    j = dense_jac(rule, x)
    bias_cols = j[:, rule.n_w : rule.n_w + 2]
    assert np.array_equal(bias_cols, np.tile(np.eye(2), (2, 1)))


def test_sum_of_squares_examples():
    rule = SumOfSquares(2)
    assert rule.evaluate(np.zeros(2))[0] == 0
    assert np.allclose(dense_jac(rule, np.zeros(2)), 0)
    assert np.allclose(z_dense(rule, np.zeros(2), [1.0]), 2 * np.eye(2))
    assert rule.evaluate(np.array([1.0, 2.0]))[0] == 5
    assert np.allclose(dense_jac(rule, np.array([1.0, 2.0])), [[2, 4]])


def test_gather_and_scatter():
    g = Gather([0, 0], 2)
    assert np.allclose(g.evaluate(np.array([5.0, 7.0])), [5, 5])
    j = dense_jac(g, np.array([5.0, 7.0]))
    assert set(np.unique(j)) <= {0.0, 1.0} and np.all(j.sum(axis=1) == 1)
    s = ScatterAdd([0, 0], 1)
    assert np.allclose(s.evaluate(np.array([1.0, 1.0])), [2])
    with pytest.raises(IndexError):
        Gather([3], 2)
    with pytest.raises(IndexError):
        ScatterAdd([1], 1)


@pytest.mark.parametrize("rule", [Linear(SparseMatrix.identity(3)), Gather([1, 2], 3), ScatterAdd([0, 1, 0], 2)])
def test_linear_rules_have_exactly_zero_z(rule):
    z = rule.weighted_hessian(None, np.ones(rule.n_out))
    assert z.vals.size == 0


def test_constant_has_no_inputs():
    c = Constant([1.0, 2.0])
    assert c.n_in == 0 and np.allclose(c.evaluate(np.zeros(0)), [1, 2])
    assert c.pullback(None, np.ones((3, 2))).shape == (3, 0)


@pytest.mark.parametrize("trial", range(20))
def test_every_rule_against_finite_differences(trial):
    rng = np.random.default_rng(100 + trial)
    for rule, x in sample_primitives(rng):
        _, ctx = rule.forward(x)
        jac = rule.jacobian(ctx).to_scipy().toarray()
        assert rel_err(jac, fd_jacobian(rule.evaluate, x)) <= 1e-6, rule
        ybar = rng.standard_normal(rule.n_out)
        z = weighted_hessian_dense(rule.weighted_hessian(ctx, ybar), rule.n_in)
        fd = fd_hessian(lambda v: rule.jacobian(rule.forward(v)[1]).to_scipy().T @ ybar, x)
        assert rel_err(z, fd) <= 1e-6 or np.abs(z - fd).max() <= 1e-8, rule
        assert np.array_equal(z, z.T)
        m = rng.standard_normal((2, rule.n_out))
        assert np.allclose(rule.pullback(ctx, m), m @ jac, rtol=1e-12, atol=1e-12)
