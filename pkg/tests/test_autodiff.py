import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gqa import autodiff as ad
from gqa.autodiff import ContractError, DimensionError, Tape, Tensor
from gqa.gradcheck import analytic_grads, numerical_grad, relative_error


def param(x):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)


# -- matmul ----------------------------------------------------------------------

def test_matmul_identity():
    x = np.array([[1.0, 2], [3, 4]])
    np.testing.assert_array_equal(ad.matmul(Tensor(np.eye(2)), Tensor(x)).data, x)


def test_matmul_hand_arithmetic():
    assert ad.matmul(Tensor([[1.0, 2]]), Tensor([[3.0], [4]])).data.tolist() == [[11.0]]


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_matmul_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    A, B = param(rng.normal(size=(3, 3))), param(rng.normal(size=(3, 3)))

    def f():
        return ad.sum(ad.matmul(A, B))

    (ga,) = analytic_grads(f, [A])
    assert relative_error(ga, numerical_grad(f, A, 1e-4)) < 1e-4


# -- elementwise -----------------------------------------------------------------

def test_tanh_and_sigmoid_at_zero():
    assert ad.tanh(Tensor([0.0])).data[0] == 0.0
    assert ad.sigmoid(Tensor([0.0])).data[0] == 0.5


def test_tanh_derivative_at_one():
    x = param([1.0])
    (g,) = analytic_grads(lambda: ad.sum(ad.tanh(x)), [x])
    fd = numerical_grad(lambda: ad.sum(ad.tanh(x)), x, 1e-5)
    assert abs(g[0] - fd[0]) < 1e-6
    assert abs(g[0] - (1 - math.tanh(1.0) ** 2)) < 1e-12


def test_sigmoid_is_stable_for_large_inputs():
    y = ad.sigmoid(Tensor([-1000.0, 1000.0])).data
    assert np.all(np.isfinite(y)) and y[0] == 0.0 and y[1] == 1.0


def test_elementwise_shape_mismatch():
    with pytest.raises(DimensionError):
        ad.add(Tensor(np.zeros(2)), Tensor(np.zeros(3)))
    with pytest.raises(DimensionError):
        ad.mul(Tensor(np.zeros((2, 1))), Tensor(np.zeros((2, 2))))


def test_elementwise_dispatch():
    x = Tensor([0.5, -0.5])
    np.testing.assert_array_equal(ad.elementwise("tanh", x).data, np.tanh(x.data))
    np.testing.assert_array_equal(ad.elementwise("scale", x, 2.0).data, [1.0, -1.0])
    with pytest.raises(ContractError):
        ad.elementwise("relu", x)


# -- softmax ---------------------------------------------------------------------

def test_softmax_examples():
    np.testing.assert_allclose(ad.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
    big = ad.softmax(Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(big)) and big[0] == pytest.approx(1.0) and big[1] < 1e-300
    np.testing.assert_allclose(ad.softmax(Tensor(np.log([1.0, 2, 3]))).data,
                               [1 / 6, 2 / 6, 3 / 6], rtol=1e-12)


def test_softmax_mask_zeroes_positions():
    y = ad.softmax(Tensor([[1.0, 5.0, 2.0]]), axis=1, mask=np.array([[True, False, True]])).data
    assert y[0, 1] == 0.0
    assert y.sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-50, 50)), st.randoms())
def test_softmax_sums_to_one_and_is_permutation_equivariant(x, rnd):
    perm = list(range(len(x)))
    rnd.shuffle(perm)
    y = ad.softmax(Tensor(x)).data
    assert abs(y.sum() - 1.0) < 1e-9
    assert np.all(y > 0)
    np.testing.assert_allclose(ad.softmax(Tensor(x[perm])).data, y[perm], rtol=1e-14, atol=0)


# -- concat / structure ----------------------------------------------------------

def test_concat_examples():
    assert ad.concat([Tensor([1.0, 2]), Tensor([3.0])]).data.tolist() == [1, 2, 3]
    x = Tensor([4.0, 5])
    assert ad.concat([x, Tensor(np.zeros(0))]).data.tolist() == [4, 5]


def test_concat_gradient_is_ones():
    a, b = param([1.0, 2]), param([3.0])
    ga, gb = analytic_grads(lambda: ad.sum(ad.concat([a, b])), [a, b])
    assert ga.tolist() == [1, 1] and gb.tolist() == [1]


def test_concat_mismatched_extents():
    with pytest.raises(DimensionError):
        ad.concat([Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3)))], axis=1)


def test_no_implicit_broadcasting():
    with pytest.raises(DimensionError):
        ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros(3)))
    with pytest.raises(DimensionError):
        ad.scale(Tensor(np.zeros(3)), Tensor(np.zeros(2)))


# -- backward --------------------------------------------------------------------

def test_backward_square():
    x = param([3.0])
    with Tape() as tape:
        loss = ad.mul(x, x)
    tape.backward(loss)
    assert x.grad.tolist() == [6.0]


def test_backward_accumulates_over_uses():
    x = param([1.0])
    with Tape() as tape:
        loss = ad.add(x, x)
    tape.backward(loss)
    assert x.grad.tolist() == [2.0]


def test_backward_rejects_non_scalar_and_empty_tape():
    x = param([1.0, 2.0])
    with Tape() as tape:
        y = ad.tanh(x)
        with pytest.raises(ContractError):
            tape.backward(y)
    with pytest.raises(ContractError):
        Tape().backward(Tensor([1.0]))


def test_tape_records_in_topological_order_and_is_consumed():
    x = param([0.3])
    with Tape() as tape:
        y = ad.tanh(x)
        z = ad.sigmoid(y)
        loss = ad.sum(ad.mul(z, y))
    outputs = [rec[1] for rec in tape.records]
    for i, (inputs, _, _) in enumerate(tape.records):
        for inp in inputs:
            if not inp._leaf:
                assert outputs.index(inp) < i
    tape.backward(loss)
    assert len(tape) == 0


def test_no_tape_means_no_recording():
    x = param([0.3])
    y = ad.tanh(x)
    assert not y.requires_grad


def test_forward_replay_is_bit_identical():
    rng = np.random.default_rng(5)
    A, x = Tensor(rng.normal(size=(4, 4))), Tensor(rng.normal(size=(2, 4)))

    def run():
        return ad.softmax(ad.tanh(ad.matmul(x, A)), axis=1).data

    np.testing.assert_array_equal(run(), run())


# -- randomized gradient checks for every differentiable op ----------------------

def _unary(op):
    return lambda xs: ad.sum(ad.mul(op(xs[0]), xs[1]))


OPS = {
    "matmul": ([(3, 4), (4, 2)], lambda xs: ad.sum(ad.tanh(ad.matmul(xs[0], xs[1])))),
    "bmm": ([(2, 3, 4), (2, 4, 2)], lambda xs: ad.sum(ad.tanh(ad.bmm(xs[0], xs[1])))),
    "transpose": ([(2, 3, 4), (2, 4, 3)], lambda xs: ad.sum(ad.mul(ad.transpose(xs[0]), xs[1]))),
    "reshape": ([(2, 6), (3, 4)], lambda xs: ad.sum(ad.mul(ad.reshape(xs[0], (3, 4)), xs[1]))),
    "add": ([(3, 2), (3, 2)], lambda xs: ad.sum(ad.tanh(ad.add(xs[0], xs[1])))),
    "sub": ([(3, 2), (3, 2)], lambda xs: ad.sum(ad.tanh(ad.sub(xs[0], xs[1])))),
    "mul": ([(3, 2), (3, 2)], lambda xs: ad.sum(ad.mul(xs[0], xs[1]))),
    "scale": ([(3, 2), (1,)], lambda xs: ad.sum(ad.tanh(ad.scale(xs[0], xs[1])))),
    "shift": ([(3,), (3,)], lambda xs: ad.sum(ad.mul(ad.shift(xs[0], 0.5), xs[1]))),
    "add_bias": ([(2, 3, 4), (4,)], lambda xs: ad.sum(ad.tanh(ad.add_bias(xs[0], xs[1])))),
    "expand": ([(3, 1), (3, 4)], lambda xs: ad.sum(ad.mul(ad.expand(xs[0], 4), xs[1]))),
    "tanh": ([(5,), (5,)], _unary(ad.tanh)),
    "sigmoid": ([(5,), (5,)], _unary(ad.sigmoid)),
    "exp": ([(5,), (5,)], _unary(ad.exp)),
    "log": ([(5,), (5,)], lambda xs: ad.sum(ad.mul(ad.log(ad.shift(ad.mul(xs[0], xs[0]), 0.5)),
                                                   xs[1]))),
    "softmax": ([(3, 5), (3, 5)], lambda xs: ad.sum(ad.mul(ad.softmax(xs[0], axis=1), xs[1]))),
    "softmax_axis0": ([(4, 2), (4, 2)], lambda xs: ad.sum(ad.mul(ad.softmax(xs[0], axis=0), xs[1]))),
    "concat": ([(2, 3), (2, 2)], lambda xs: ad.sum(ad.tanh(ad.concat([xs[0], xs[1], xs[0]], 1)))),
    "stack": ([(3,), (3,)], lambda xs: ad.sum(ad.tanh(ad.stack([xs[0], xs[1]], axis=1)))),
    "getitem": ([(3, 4), (3, 2)], lambda xs: ad.sum(ad.mul(xs[0][:, 1:3], xs[1]))),
    "sum_axis": ([(3, 4), (3,)], lambda xs: ad.sum(ad.mul(ad.sum(xs[0], axis=1), xs[1]))),
    "take_along": ([(3, 4), (3,)], lambda xs: ad.sum(ad.mul(ad.take_along(xs[0], [0, 3, 3]),
                                                            xs[1]))),
    "scatter_add": ([(2, 3), (2, 5)], lambda xs: ad.sum(ad.mul(
        ad.scatter_add(xs[0], [[0, 4, 0], [2, 2, 1]], 5), xs[1]))),
    "embedding": ([(5, 3), (2, 2, 3)], lambda xs: ad.sum(ad.mul(ad.embedding(xs[0], [[0, 4], [4, 1]]),
                                                               xs[1]))),
    "gru_step": ([(2, 9), (2, 3), (3, 6), (3, 3)], lambda xs: ad.sum(ad.mul(
        ad.gru_step(xs[0], xs[1], xs[2], xs[3]), ad.tanh(xs[1])))),
    "blend": ([(2, 3), (2, 3)], lambda xs: ad.sum(ad.tanh(ad.blend(
        np.array([[1, 0, 1], [0, 0, 1]]), xs[0], ad.mul(xs[1], xs[1]))))),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients_on_100_random_draws(name):
    shapes, fn = OPS[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    worst = 0.0
    for _ in range(100):
        xs = [param(rng.uniform(-2, 2, size=s)) for s in shapes]
        grads = analytic_grads(lambda: fn(xs), xs)
        for x, g in zip(xs, grads):
            worst = max(worst, relative_error(g, numerical_grad(lambda: fn(xs), x, 1e-4)))
    assert worst < 1e-4, f"{name}: worst relative error {worst:.2e}"
