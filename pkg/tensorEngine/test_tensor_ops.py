"""
Tests for the tensor engine

Covers the forward values, error cases and backward rules of every op in
tensorEngine.ops, plus the Tape/backward contract.
"""

import math
import os
import sys

import numpy as np
import numpy.testing as npt
import pytest

# Add the parent directory to the path so we can import the tensorEngine package
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from tensorEngine import ops
from tensorEngine.errors import ContractError, DimensionError, NumericError, TokenIndexError
from tensorEngine.gradient_check import finite_diff_check
from tensorEngine.tensor import Tape, Tensor, active_tape, backward, no_grad

# Checks through a smooth nonlinearity carry O(h^2) truncation error.
GRAD_TOLERANCE = 1e-4


def away_from_zero(rng, shape, low=-2.0, high=2.0, gap=1e-3):
    """Uniform draws in [low, high] with |x| >= gap."""
    values = rng.uniform(low, high, size=shape)
    values[np.abs(values) < gap] = gap
    return values


def test_tensor_rank_limits():
    Tensor([1.0])
    Tensor(np.zeros((2, 3, 4)))
    with pytest.raises(DimensionError):
        Tensor(5.0)
    with pytest.raises(DimensionError):
        Tensor(np.zeros((1, 1, 1, 1)))


def test_tensor_values_are_float64_and_read_only():
    tensor = Tensor([1, 2, 3])
    assert tensor.values.dtype == np.float64
    with pytest.raises(ValueError):
        tensor.values[0] = 9.0


def test_matmul_examples():
    identity = Tensor(np.eye(2))
    b = Tensor([[3.0, 4.0], [5.0, 6.0]])
    npt.assert_array_equal(ops.matmul(identity, b).values, [[3, 4], [5, 6]])
    npt.assert_array_equal(ops.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).values, [[11.0]])


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))


def test_matmul_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    b = Tensor(rng.normal(size=(4, 3)))
    a = Tensor(rng.normal(size=(5, 4)))
    assert finite_diff_check(lambda x: ops.sum_all(ops.matmul(x, b)), a) < 1e-6
    assert finite_diff_check(lambda x: ops.sum_all(ops.mul(ops.matmul(a, x), ops.matmul(a, x))), b) < 1e-6


def test_matmul_rank3_batch():
    rng = np.random.default_rng(1)
    a = Tensor(rng.normal(size=(2, 3, 4)))
    b = Tensor(rng.normal(size=(4, 5)))
    out = ops.matmul(a, b)
    npt.assert_allclose(out.values[1], a.values[1] @ b.values)
    assert finite_diff_check(lambda x: ops.sum_all(ops.tanh(ops.matmul(a, x))), b) < GRAD_TOLERANCE


def test_batched_matmul_gradients():
    rng = np.random.default_rng(2)
    a = Tensor(rng.normal(size=(2, 3, 4)))
    b = Tensor(rng.normal(size=(2, 4, 3)))
    assert finite_diff_check(lambda x: ops.sum_all(ops.tanh(ops.batched_matmul(x, b))), a) < GRAD_TOLERANCE
    assert finite_diff_check(lambda x: ops.sum_all(ops.tanh(ops.batched_matmul(a, x))), b) < GRAD_TOLERANCE


def test_elementwise_examples():
    npt.assert_array_equal(ops.elementwise("add", Tensor([1.0, 2.0, 3.0]), Tensor([0.0, 0.0, 0.0])).values, [1, 2, 3])
    npt.assert_array_equal(ops.elementwise("mul", Tensor([2.0, 3.0]), Tensor([4.0, 5.0])).values, [8, 15])
    npt.assert_array_equal(ops.elementwise("sub", Tensor([2.0, 3.0]), Tensor([4.0, 5.0])).values, [-2, -2])


def test_bias_broadcast_and_column_sum_gradient():
    bias = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    zeros = Tensor(np.zeros((2, 3)))
    with Tape() as tape:
        out = ops.add(zeros, bias)
        loss = ops.sum_all(ops.mul(out, Tensor([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])))
    npt.assert_array_equal(out.values, [[1, 2, 3], [1, 2, 3]])
    backward(tape, loss)
    npt.assert_array_equal(bias.grad, [5.0, 7.0, 9.0])

    rng = np.random.default_rng(3)
    a = Tensor(rng.normal(size=(2, 3)))
    assert finite_diff_check(lambda b: ops.sum_all(ops.tanh(ops.add(a, b))), Tensor(rng.normal(size=3))) < GRAD_TOLERANCE
    assert finite_diff_check(lambda b: ops.sum_all(ops.tanh(ops.mul(a, b))), Tensor(rng.normal(size=3))) < GRAD_TOLERANCE
    assert finite_diff_check(lambda b: ops.sum_all(ops.tanh(ops.sub(a, b))), Tensor(rng.normal(size=3))) < GRAD_TOLERANCE


def test_elementwise_rejects_non_broadcastable_shapes():
    with pytest.raises(DimensionError):
        ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones(2)))
    with pytest.raises(ContractError):
        ops.elementwise("div", Tensor([1.0]), Tensor([1.0]))


def test_relu_examples_and_zero_tie():
    x = Tensor([-1.0, 0.0, 2.0], requires_grad=True)
    with Tape() as tape:
        out = ops.relu(x)
        loss = ops.sum_all(out)
    npt.assert_array_equal(out.values, [0, 0, 2])
    backward(tape, loss)
    npt.assert_array_equal(x.grad, [0.0, 0.0, 1.0])

    negative = Tensor([-3.0, -0.5], requires_grad=True)
    with Tape() as tape:
        loss = ops.sum_all(ops.relu(negative))
    backward(tape, loss)
    assert loss.item() == 0.0
    npt.assert_array_equal(negative.grad, [0.0, 0.0])


def test_relu_gradient_away_from_kink():
    rng = np.random.default_rng(4)
    x = Tensor(away_from_zero(rng, (4, 5)))
    weights = Tensor(rng.normal(size=(4, 5)))
    assert finite_diff_check(lambda t: ops.sum_all(ops.mul(ops.relu(t), weights)), x, h=1e-4) < 1e-6


def test_softmax_examples():
    npt.assert_allclose(ops.softmax(Tensor([0.0, 0.0, 0.0])).values, [1 / 3, 1 / 3, 1 / 3], rtol=1e-15)
    npt.assert_array_equal(ops.softmax(Tensor([1000.0, 1000.0])).values, [0.5, 0.5])
    npt.assert_allclose(ops.softmax(Tensor([0.0, math.log(2.0)])).values, [1 / 3, 2 / 3], rtol=1e-14)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(5)
    for _ in range(50):
        values = rng.normal(scale=rng.uniform(0.1, 50.0), size=(3, 4, 7))
        sums = ops.softmax(Tensor(values)).values.sum(axis=-1)
        assert np.max(np.abs(sums - 1.0)) <= 1e-12


def test_softmax_rejects_non_finite_input():
    with pytest.raises(NumericError):
        ops.softmax(Tensor([0.0, np.nan]))
    with pytest.raises(NumericError):
        ops.softmax(Tensor([np.inf, 0.0]))


def test_softmax_gradient():
    rng = np.random.default_rng(6)
    weights = Tensor(rng.normal(size=(3, 5)))
    x = Tensor(rng.uniform(-2, 2, size=(3, 5)))
    assert finite_diff_check(lambda t: ops.sum_all(ops.mul(ops.softmax(t), weights)), x) < GRAD_TOLERANCE


def test_cross_entropy_analytic_values():
    logits = np.zeros((3, 4))
    labels = [2, 0, 3]
    logits[np.arange(3), labels] = 1e9
    assert ops.cross_entropy(Tensor(logits), labels).item() < 1e-6

    uniform = ops.cross_entropy(Tensor(np.zeros((5, 97))), [0, 10, 20, 30, 96]).item()
    assert uniform == pytest.approx(math.log(97), abs=1e-12)
    assert uniform == pytest.approx(4.574711, abs=1e-6)

    assert ops.cross_entropy(Tensor([[0.0, 0.0]]), [1]).item() == pytest.approx(0.693147, abs=1e-6)


def test_cross_entropy_is_non_negative():
    rng = np.random.default_rng(7)
    for _ in range(20):
        logits = Tensor(rng.normal(scale=5.0, size=(6, 9)))
        labels = rng.integers(0, 9, size=6)
        assert ops.cross_entropy(logits, labels).item() >= 0.0


def test_cross_entropy_label_range():
    with pytest.raises(TokenIndexError):
        ops.cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])
    with pytest.raises(TokenIndexError):
        ops.cross_entropy(Tensor(np.zeros((2, 3))), [-1, 0])


def test_cross_entropy_gradient_is_probabilities_minus_onehot():
    rng = np.random.default_rng(8)
    values = rng.normal(size=(4, 6))
    labels = [1, 5, 0, 1]
    logits = Tensor(values, requires_grad=True)
    with Tape() as tape:
        loss = ops.cross_entropy(logits, labels)
    backward(tape, loss)
    probs = np.exp(values) / np.exp(values).sum(axis=1, keepdims=True)
    probs[np.arange(4), labels] -= 1.0
    npt.assert_allclose(logits.grad, probs / 4, rtol=1e-12, atol=1e-15)


def test_embedding_lookup_examples():
    table = Tensor([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
    npt.assert_array_equal(ops.embedding_lookup(table, [2, 0]).values, [[2, 2], [1, 0]])
    assert ops.embedding_lookup(table, [[0, 1, 2], [2, 2, 2]]).shape == (2, 3, 2)
    with pytest.raises(TokenIndexError):
        ops.embedding_lookup(table, [3])


def test_embedding_lookup_repeated_ids_accumulate():
    table = Tensor(np.zeros((3, 2)), requires_grad=True)
    upstream = Tensor([[1.0, 2.0], [10.0, 20.0]])
    with Tape() as tape:
        loss = ops.sum_all(ops.mul(ops.embedding_lookup(table, [1, 1]), upstream))
    backward(tape, loss)
    npt.assert_array_equal(table.grad, [[0, 0], [11, 22], [0, 0]])


def test_embedding_lookup_gradient():
    rng = np.random.default_rng(9)
    weights = Tensor(rng.normal(size=(2, 3, 4)))
    ids = [[0, 2, 2], [4, 1, 0]]
    check = finite_diff_check(
        lambda t: ops.sum_all(ops.mul(ops.tanh(ops.embedding_lookup(t, ids)), weights)),
        Tensor(rng.normal(size=(5, 4))),
    )
    assert check < GRAD_TOLERANCE


def test_layer_norm_examples():
    ones, zeros = Tensor([1.0, 1.0, 1.0]), Tensor([0.0, 0.0, 0.0])
    npt.assert_array_equal(ops.layer_norm(Tensor([[5.0, 5.0, 5.0]]), ones, zeros).values, [[0, 0, 0]])
    out = ops.layer_norm(Tensor([-1.0, 1.0]), Tensor([1.0, 1.0]), Tensor([0.0, 0.0]))
    npt.assert_allclose(out.values, [-1.0, 1.0], atol=1e-5)
    with pytest.raises(DimensionError):
        ops.layer_norm(Tensor([1.0, 2.0]), ones, zeros)


def test_layer_norm_gradients():
    rng = np.random.default_rng(10)
    x = Tensor(rng.uniform(-2, 2, size=(2, 3, 5)))
    gain = Tensor(rng.uniform(0.5, 1.5, size=5))
    bias = Tensor(rng.normal(size=5))
    weights = Tensor(rng.normal(size=(2, 3, 5)))

    def loss_of(tensor_x, tensor_gain, tensor_bias):
        return ops.sum_all(ops.mul(ops.layer_norm(tensor_x, tensor_gain, tensor_bias), weights))

    assert finite_diff_check(lambda t: loss_of(t, gain, bias), x) < GRAD_TOLERANCE
    assert finite_diff_check(lambda t: loss_of(x, t, bias), gain) < GRAD_TOLERANCE
    assert finite_diff_check(lambda t: loss_of(x, gain, t), bias) < GRAD_TOLERANCE


def test_shape_plumbing_gradients():
    rng = np.random.default_rng(11)
    x = Tensor(rng.normal(size=(2, 3, 4)))
    weights = Tensor(rng.normal(size=(2, 4)))

    def heads(t):
        left, right = ops.slice_last(t, 0, 2), ops.slice_last(t, 2, 4)
        merged = ops.concat_last([ops.tanh(right), left])
        return ops.sum_all(ops.mul(ops.select_position(merged, 1), weights))

    assert finite_diff_check(heads, x) < GRAD_TOLERANCE
    assert finite_diff_check(lambda t: ops.sum_all(ops.tanh(ops.transpose_last(t))), x) < GRAD_TOLERANCE
    assert finite_diff_check(lambda t: ops.sum_all(ops.tanh(ops.reshape(t, (6, 4)))), x) < GRAD_TOLERANCE
    assert finite_diff_check(lambda t: ops.sum_all(ops.sigmoid(ops.scale(t, 3.0))), x) < GRAD_TOLERANCE


def test_add_constant_passes_gradient_through():
    x = Tensor(np.ones((2, 2, 2)), requires_grad=True)
    mask = np.array([[0.0, -1e9], [0.0, 0.0]])
    with Tape() as tape:
        loss = ops.sum_all(ops.softmax(ops.add_constant(x, mask)))
    backward(tape, loss)
    npt.assert_allclose(x.grad, np.zeros((2, 2, 2)), atol=1e-15)


def test_backward_sum_gives_ones():
    w = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    with Tape() as tape:
        loss = ops.sum_all(w)
    backward(tape, loss)
    npt.assert_array_equal(w.grad, np.ones((2, 3)))


def test_backward_zero_scaled_loss_gives_zero_grads():
    w = Tensor([1.0, -2.0, 3.0], requires_grad=True)
    with Tape() as tape:
        loss = ops.sum_all(ops.scale(w, 0.0))
    backward(tape, loss)
    npt.assert_array_equal(w.grad, [0.0, 0.0, 0.0])


def test_backward_unreachable_params_get_zero_grad():
    used = Tensor([1.0, 2.0], requires_grad=True)
    unused = Tensor([5.0], requires_grad=True)
    with Tape() as tape:
        loss = ops.sum_all(used)
    backward(tape, loss, params=[used, unused])
    npt.assert_array_equal(unused.grad, [0.0])


def test_backward_contract():
    w = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        out = ops.scale(w, 2.0)
    with pytest.raises(ContractError):
        backward(tape, out)

    with Tape() as tape:
        loss = ops.sum_all(w)
    backward(tape, loss)
    with pytest.raises(ContractError):
        backward(tape, loss)
    tape.reset()
    assert len(tape) == 0


def test_backward_is_linear_in_the_loss():
    rng = np.random.default_rng(12)
    values = rng.normal(size=(3, 4))
    labels = [0, 3, 1]

    def grad_of(loss_fn):
        w = Tensor(values, requires_grad=True)
        with Tape() as tape:
            loss = loss_fn(w)
        backward(tape, loss)
        return w.grad

    first = lambda w: ops.cross_entropy(w, labels)
    second = lambda w: ops.sum_all(ops.mul(ops.tanh(w), ops.tanh(w)))
    combined = grad_of(lambda w: ops.add(first(w), second(w)))
    npt.assert_allclose(combined, grad_of(first) + grad_of(second), rtol=1e-12, atol=1e-15)


def test_tape_records_in_topological_order():
    w = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        hidden = ops.tanh(w)
        loss = ops.sum_all(ops.mul(hidden, hidden))
    assert [node.op for node in tape.nodes] == ["tanh", "mul", "sum_all"]
    produced = {id(w)}
    for node in tape.nodes:
        assert all(input_id in produced for input_id in node.input_ids)
        produced.add(node.output_id)
    assert active_tape() is None


def test_no_tape_means_nothing_recorded():
    w = Tensor([1.0], requires_grad=True)
    out = ops.scale(w, 2.0)
    assert not out.requires_grad
    with Tape() as tape:
        with no_grad():
            ops.scale(w, 2.0)
    assert len(tape) == 0
