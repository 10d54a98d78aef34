import numpy as np
import pytest

from hesspcl.linalg import SparseMatrix, sym_eigen
from hesspcl.nn import NetworkSpec
from hesspcl.pde import build_dnn_only_loss
from hesspcl.primitives import Affine, Gather, Linear, Primitive, SumOfSquares, elementwise, square, tanh
from hesspcl.tape import (
    HessianStats,
    StageError,
    TapeBuilder,
    dense_reference_hessian,
    forward,
    gradient,
    hessian,
    value_and_derivatives,
)
from hesspcl.primitives import UnsupportedPrimitive
from hesspcl.sparse_solver import SparseSolve
from hesspcl.verify import fd_gradient, fd_hessian, rel_err, small_tapes


def chain(n_inputs, *rules):
    b = TapeBuilder(n_inputs)
    v = b.inputs
    for r in rules:
        v = b.add(r, v)
    return b.build()


def test_square_tape():
    t = chain(1, square(1))
    assert forward(t, [3.0])[0] == 9.0
    assert gradient(t, [3.0]).tolist() == [6.0]
    assert hessian(t, [3.0]).to_dense().tolist() == [[2.0]]


def test_tanh_then_square():
    t = chain(1, tanh(1), square(1))
    assert forward(t, [0.0])[0] == 0.0
    assert gradient(chain(1, tanh(1)), [0.0]).tolist() == [1.0]
    h = hessian(t, [0.0]).to_dense()
    assert h[0, 0] == pytest.approx(2.0, abs=1e-15)
    for x in (0.3, -1.2):
        s, th = 1 / np.cosh(x) ** 2, np.tanh(x)
        closed = 2 * (s * s - 2 * th * th * s)
        assert hessian(t, [x]).to_dense()[0, 0] == pytest.approx(closed, rel=1e-13)
        assert hessian(t, [x]).to_dense()[0, 0] == pytest.approx(fd_hessian(lambda v: gradient(t, v), np.array([x]))[0, 0], rel=1e-7)


def test_one_layer_toy_has_three_flat_directions():
    spec = NetworkSpec(1, 1, (1,))
    tape = build_dnn_only_loss([[0.5]], [1.0], spec)
    # any point with w2 tanh(w1 x0 + b1) + b2 = y0 is a minimizer
    w1, b1, w2 = 0.7, -0.2, 1.3
    b2 = 1.0 - w2 * np.tanh(w1 * 0.5 + b1)
    theta = np.array([w1, b1, w2, b2])
    assert forward(tape, theta)[0] == pytest.approx(0.0, abs=1e-30)
    w = sym_eigen(hessian(tape, theta)).eigenvalues
    assert np.sum(np.abs(w) <= 1e-10 * w[-1]) == 3


def random_tape(rng):
    """At most 6 stages over at most 12 live variables, mixing every stage kind."""
    n_in = int(rng.integers(2, 4))
    b = TapeBuilder(n_in)
    pool = list(b.inputs)
    kinds = ["tanh", "sin", "exp", "square", "affine", "linear"]
    for _ in range(int(rng.integers(1, 5))):
        kind = kinds[rng.integers(len(kinds))]
        k = int(rng.integers(1, min(3, len(pool)) + 1))
        ins = rng.choice(pool, size=k, replace=False)
        if kind == "affine":
            if len(pool) < 3:
                continue
            ins = rng.choice(pool, size=3, replace=False)
            out = b.add(Affine(1, 1, points=1), ins)
        elif kind == "linear":
            m = SparseMatrix.from_dense(rng.standard_normal((1, k)))
            out = b.add(Linear(m, rng.standard_normal(1)), ins)
        else:
            out = b.add(elementwise(kind, k), ins)
        pool.extend(out.tolist())
        if b.live_size > 10:
            break
    picked = rng.choice(pool, size=min(2, len(pool)), replace=False)
    b.add(SumOfSquares(picked.size), picked)
    return b.build()


@pytest.mark.parametrize("trial", range(50))
def test_random_tapes_against_finite_differences(trial):
    rng = np.random.default_rng(1000 + trial)
    tape = random_tape(rng)
    assert len(tape.stages) <= 6 and tape.live_size <= 12 + 1
    x = rng.uniform(-0.8, 0.8, tape.n_inputs)
    g = gradient(tape, x)
    assert rel_err(g, fd_gradient(lambda v: forward(tape, v)[0], x)) <= 1e-6 or np.abs(g).max() < 1e-12
    h = hessian(tape, x).to_dense()
    fd = fd_hessian(lambda v: gradient(tape, v), x)
    assert np.abs(h - fd).max() <= 1e-5 * (1 + np.abs(h).max())
    assert np.array_equal(h, h.T)
    assert np.array_equal(h, hessian(tape, x, condensed=False).to_dense())
    assert np.allclose(h, dense_reference_hessian(tape, x), rtol=1e-12, atol=1e-12)


def test_linear_stages_only_carry_final_z():
    m = SparseMatrix.from_dense(np.array([[1.0, 2.0], [0.0, 3.0]]))
    tape = chain(2, Linear(m, np.array([1.0, -1.0])), Gather([0, 1, 1], 2), SumOfSquares(3))
    a = np.array([[1.0, 2.0], [0.0, 3.0], [0.0, 3.0]])
    assert np.allclose(hessian(tape, np.array([0.2, 0.4])).to_dense(), 2 * a.T @ a)


def test_benchmark_tapes_condensed_bit_identical():
    rng = np.random.default_rng(7)
    for name, tape, theta in small_tapes(rng):
        a = hessian(tape, theta).to_dense()
        b = hessian(tape, theta, condensed=False).to_dense()
        assert np.array_equal(a, b), name


def test_value_and_derivatives_and_stats():
    tape = chain(1, tanh(1), square(1))
    stats = HessianStats()
    v, g, h = value_and_derivatives(tape, np.array([0.5]), stats=stats)
    assert v == pytest.approx(np.tanh(0.5) ** 2)
    assert g.shape == (1,) and h.dim == 1
    assert stats.max_active >= 1
    assert value_and_derivatives(tape, np.array([0.5]), order=1)[2] is None


class NoSecondOrder(Primitive):
    kind = "mystery"

    def __init__(self):
        super().__init__(1, 1)

    def evaluate(self, x):
        return x**3

    def pullback(self, x, m):
        return m * 3 * x**2


def test_missing_second_order_rule_names_the_kind():
    tape = chain(1, NoSecondOrder(), square(1))
    assert gradient(tape, np.array([1.0]))[0] == pytest.approx(6.0)
    with pytest.raises(UnsupportedPrimitive, match="mystery"):
        hessian(tape, np.array([1.0]))


def test_forward_errors_carry_stage_index():
    from hesspcl.sparse_solver import SolvePattern

    pattern = SolvePattern(2, [0, 1], [0, 1], np.ones(2))
    tape = chain(2, SparseSolve(pattern), SumOfSquares(2))
    with pytest.raises(StageError) as info:
        forward(tape, np.array([1.0, 0.0]))
    assert info.value.index == 0 and "condition" in str(info.value)


def test_builder_validation():
    b = TapeBuilder(2)
    with pytest.raises(ValueError):
        b.add(square(2), [0, 0])
    with pytest.raises(IndexError):
        b.add(square(1), [5])
    with pytest.raises(ValueError):
        TapeBuilder(1).build()
    with pytest.raises(ValueError):
        forward(chain(2, SumOfSquares(2)), np.zeros(3))


def test_reruns_are_bit_identical():
    rng = np.random.default_rng(11)
    for _, tape, theta in small_tapes(rng):
        assert np.array_equal(hessian(tape, theta).entries, hessian(tape, theta).entries)
