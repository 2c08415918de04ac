"""
Differentiable Operations

This module provides every tensor operation the model zoo is built from.
Each op computes its output with numpy in 64-bit floats and registers a
backward rule with the active tape. It includes:
1. Linear algebra (matmul, batched_matmul)
2. Elementwise arithmetic with trailing-axis broadcasting (add, sub, mul, scale, add_constant)
3. Activations and normalization (relu, sigmoid, tanh, softmax, layer_norm)
4. Indexing and shape plumbing (embedding_lookup, reshape, transpose_last,
   slice_last, concat_last, select_position, sum_all)
5. The classification loss (cross_entropy)
"""

from typing import Sequence, Tuple, Union

import numpy as np

from tensorEngine.errors import ContractError, DimensionError, NumericError, TokenIndexError
from tensorEngine.tensor import Tensor, make_result

IdArray = Union[Sequence[int], Sequence[Sequence[int]], np.ndarray]


def _trailing_broadcast(a: Tensor, b: Tensor, op: str) -> bool:
    """
    Check that b can be combined with a.

    Returns True when b must be broadcast over a's leading axes, False when the
    shapes are equal.
    """
    if a.shape == b.shape:
        return False
    if b.rank < a.rank and a.shape[a.rank - b.rank:] == b.shape:
        return True
    raise DimensionError(f"{op}: cannot broadcast shape {b.shape} onto shape {a.shape}")


def _sum_to_shape(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over the leading axes that broadcasting added."""
    extra = grad.ndim - len(shape)
    if extra == 0:
        return grad
    return grad.sum(axis=tuple(range(extra)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product of a rank-2 or rank-3 tensor with a rank-2 tensor.

    A rank-3 ``a`` is treated as a batch of rank-2 slices that all share ``b``.

    Args:
        a (Tensor): Left operand, shape (n, k) or (batch, n, k)
        b (Tensor): Right operand, shape (k, m)

    Returns:
        Tensor: Shape (n, m) or (batch, n, m)

    Raises:
        DimensionError: If the inner dimensions differ or ranks are unsupported
    """
    if a.rank not in (2, 3) or b.rank != 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    a_values, b_values = a.values, b.values

    def backward_rule(grad):
        grad_a = grad @ b_values.T
        flat_a = a_values.reshape(-1, a_values.shape[-1])
        grad_b = flat_a.T @ grad.reshape(-1, grad.shape[-1])
        return grad_a, grad_b

    return make_result("matmul", (a, b), a_values @ b_values, backward_rule)


def batched_matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batch of matrix products: (batch, n, k) @ (batch, k, m) -> (batch, n, m)."""
    if a.rank != 3 or b.rank != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise DimensionError(f"batched_matmul: incompatible shapes {a.shape} and {b.shape}")
    a_values, b_values = a.values, b.values

    def backward_rule(grad):
        return grad @ b_values.transpose(0, 2, 1), a_values.transpose(0, 2, 1) @ grad

    return make_result("batched_matmul", (a, b), a_values @ b_values, backward_rule)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; b may match a's trailing dimensions (bias addition)."""
    _trailing_broadcast(a, b, "add")
    b_shape = b.shape

    def backward_rule(grad):
        return grad, _sum_to_shape(grad, b_shape)

    return make_result("add", (a, b), a.values + b.values, backward_rule)


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise difference; b may match a's trailing dimensions."""
    _trailing_broadcast(a, b, "sub")
    b_shape = b.shape

    def backward_rule(grad):
        return grad, -_sum_to_shape(grad, b_shape)

    return make_result("sub", (a, b), a.values - b.values, backward_rule)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; b may match a's trailing dimensions."""
    _trailing_broadcast(a, b, "mul")
    a_values, b_values = a.values, b.values

    def backward_rule(grad):
        return grad * b_values, _sum_to_shape(grad * a_values, b_values.shape)

    return make_result("mul", (a, b), a_values * b_values, backward_rule)


def elementwise(kind: str, a: Tensor, b: Tensor) -> Tensor:
    """
    Dispatch an elementwise op by name.

    Args:
        kind (str): One of "add", "sub", "mul"
        a (Tensor): Left operand
        b (Tensor): Right operand, same shape or matching a's trailing dims

    Returns:
        Tensor: The elementwise result
    """
    ops = {"add": add, "sub": sub, "mul": mul}
    if kind not in ops:
        raise ContractError(f"Unknown elementwise op: {kind}. Valid ops are: {', '.join(ops)}")
    return ops[kind](a, b)


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply every element by a constant."""
    factor = float(factor)

    def backward_rule(grad):
        return (grad * factor,)

    return make_result("scale", (x,), x.values * factor, backward_rule)


def add_constant(x: Tensor, constant: np.ndarray) -> Tensor:
    """Add a non-trainable array matching x's trailing dimensions (used for attention masks)."""
    constant = np.asarray(constant, dtype=np.float64)
    if constant.shape != x.shape[x.rank - constant.ndim:]:
        raise DimensionError(f"add_constant: cannot broadcast shape {constant.shape} onto shape {x.shape}")

    def backward_rule(grad):
        return (grad,)

    return make_result("add_constant", (x,), x.values + constant, backward_rule)


def _relu_grad_mask(values: np.ndarray) -> np.ndarray:
    # Subgradient at exactly 0 is 0.
    return (values > 0).astype(np.float64)


def relu(x: Tensor) -> Tensor:
    """max(0, x) elementwise; the gradient passes only where x > 0."""
    mask = _relu_grad_mask(x.values)

    def backward_rule(grad):
        return (grad * mask,)

    return make_result("relu", (x,), np.maximum(x.values, 0.0), backward_rule)


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function, evaluated through tanh so large inputs never overflow."""
    out = 0.5 * (1.0 + np.tanh(0.5 * x.values))

    def backward_rule(grad):
        return (grad * out * (1.0 - out),)

    return make_result("sigmoid", (x,), out, backward_rule)


def tanh(x: Tensor) -> Tensor:
    """Hyperbolic tangent elementwise."""
    out = np.tanh(x.values)

    def backward_rule(grad):
        return (grad * (1.0 - out * out),)

    return make_result("tanh", (x,), out, backward_rule)


def softmax(x: Tensor) -> Tensor:
    """
    Softmax over the last axis.

    The row maximum is subtracted before exponentiating, so [1000, 1000]
    yields [0.5, 0.5] without overflow.

    Raises:
        NumericError: If the input contains NaN or infinite values
    """
    if not np.all(np.isfinite(x.values)):
        raise NumericError("softmax: input contains NaN or infinite values")
    shifted = x.values - x.values.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    out = exps / exps.sum(axis=-1, keepdims=True)

    def backward_rule(grad):
        inner = (grad * out).sum(axis=-1, keepdims=True)
        return (out * (grad - inner),)

    return make_result("softmax", (x,), out, backward_rule)


def cross_entropy(logits: Tensor, labels: IdArray) -> Tensor:
    """
    Mean negative log-likelihood of the correct classes.

    Computes -(1/N) * sum_i log p[i, c_i] with p = softmax(logits), through a
    log-softmax so probabilities are never exponentiated and then logged.

    Args:
        logits (Tensor): Shape (N, C) unnormalized scores
        labels: N class indices in [0, C)

    Returns:
        Tensor: Shape (1,) loss

    Raises:
        DimensionError: If logits are not rank 2 or the label count differs from N
        TokenIndexError: If a label is outside [0, C)
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.rank != 2:
        raise DimensionError(f"cross_entropy: logits must be rank 2, got shape {logits.shape}")
    n_rows, n_classes = logits.shape
    if labels.shape[0] != n_rows:
        raise DimensionError(f"cross_entropy: {labels.shape[0]} labels for {n_rows} rows")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise TokenIndexError(f"cross_entropy: labels must lie in [0, {n_classes})")

    rows = np.arange(n_rows)
    shifted = logits.values - logits.values.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    loss = -log_probs[rows, labels].sum() / n_rows

    def backward_rule(grad):
        probs = np.exp(log_probs)
        probs[rows, labels] -= 1.0
        return (probs * (grad[0] / n_rows),)

    return make_result("cross_entropy", (logits,), np.array([loss]), backward_rule)


def embedding_lookup(table: Tensor, ids: IdArray) -> Tensor:
    """
    Gather rows of an embedding table.

    Args:
        table (Tensor): Shape (V, D)
        ids: Token ids, a flat list (output (len, D)) or a batch x seq matrix
             (output (batch, seq, D))

    Returns:
        Tensor: The gathered rows

    Raises:
        TokenIndexError: If an id is outside [0, V)
    """
    ids = np.asarray(ids, dtype=np.int64)
    if table.rank != 2:
        raise DimensionError(f"embedding_lookup: table must be rank 2, got shape {table.shape}")
    if ids.ndim not in (1, 2) or ids.size == 0:
        raise DimensionError(f"embedding_lookup: ids must be a non-empty rank-1 or rank-2 array, got shape {ids.shape}")
    vocab_size, width = table.shape
    if ids.min() < 0 or ids.max() >= vocab_size:
        raise TokenIndexError(f"embedding_lookup: ids must lie in [0, {vocab_size})")
    flat_ids = ids.reshape(-1)

    def backward_rule(grad):
        grad_table = np.zeros((vocab_size, width))
        # Repeated ids accumulate.
        np.add.at(grad_table, flat_ids, grad.reshape(-1, width))
        return (grad_table,)

    return make_result("embedding_lookup", (table,), table.values[ids], backward_rule)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """
    Normalize over the last axis to zero mean and unit variance, then apply gain and bias.

    Args:
        x (Tensor): Input of any supported rank
        gain (Tensor): Rank-1, length equal to x's last dimension
        bias (Tensor): Rank-1, length equal to x's last dimension
        eps (float): Variance floor, must be positive

    Returns:
        Tensor: Same shape as x
    """
    width = x.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise DimensionError(f"layer_norm: gain {gain.shape} and bias {bias.shape} must both be ({width},)")
    if eps <= 0:
        raise ContractError(f"layer_norm: eps must be positive, got {eps}")
    centered = x.values - x.values.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    normed = centered * inv_std
    gain_values = gain.values

    def backward_rule(grad):
        grad_normed = grad * gain_values
        grad_x = inv_std * (
            grad_normed
            - grad_normed.mean(axis=-1, keepdims=True)
            - normed * (grad_normed * normed).mean(axis=-1, keepdims=True)
        )
        grad_gain = _sum_to_shape(grad * normed, (width,))
        grad_bias = _sum_to_shape(grad, (width,))
        return grad_x, grad_gain, grad_bias

    return make_result("layer_norm", (x, gain, bias), normed * gain_values + bias.values, backward_rule)


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    """Reinterpret the values with a new shape of equal size."""
    original = x.shape
    try:
        out = x.values.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"reshape: cannot reshape {original} to {shape}") from e

    def backward_rule(grad):
        return (grad.reshape(original),)

    return make_result("reshape", (x,), out, backward_rule)


def transpose_last(x: Tensor) -> Tensor:
    """Swap the last two axes of a rank-2 or rank-3 tensor."""
    if x.rank < 2:
        raise DimensionError(f"transpose_last: needs rank 2 or 3, got shape {x.shape}")

    def backward_rule(grad):
        return (np.swapaxes(grad, -1, -2),)

    return make_result("transpose_last", (x,), np.swapaxes(x.values, -1, -2), backward_rule)


def slice_last(x: Tensor, start: int, stop: int) -> Tensor:
    """Take x[..., start:stop]."""
    if not 0 <= start < stop <= x.shape[-1]:
        raise DimensionError(f"slice_last: invalid range [{start}, {stop}) for shape {x.shape}")
    original = x.shape

    def backward_rule(grad):
        full = np.zeros(original)
        full[..., start:stop] = grad
        return (full,)

    return make_result("slice_last", (x,), x.values[..., start:stop], backward_rule)


def concat_last(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate tensors along the last axis."""
    if not tensors:
        raise ContractError("concat_last: needs at least one tensor")
    leading = tensors[0].shape[:-1]
    for tensor in tensors:
        if tensor.shape[:-1] != leading:
            raise DimensionError(f"concat_last: leading shapes differ ({tensor.shape} vs {tensors[0].shape})")
    bounds = np.cumsum([0] + [tensor.shape[-1] for tensor in tensors])

    def backward_rule(grad):
        return tuple(grad[..., bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    out = np.concatenate([tensor.values for tensor in tensors], axis=-1)
    return make_result("concat_last", tuple(tensors), out, backward_rule)


def select_position(x: Tensor, index: int) -> Tensor:
    """Take the sequence position ``index`` of a (batch, seq, width) tensor."""
    if x.rank != 3:
        raise DimensionError(f"select_position: needs rank 3, got shape {x.shape}")
    if not -x.shape[1] <= index < x.shape[1]:
        raise DimensionError(f"select_position: index {index} out of range for shape {x.shape}")
    original = x.shape

    def backward_rule(grad):
        full = np.zeros(original)
        full[:, index, :] = grad
        return (full,)

    return make_result("select_position", (x,), x.values[:, index, :], backward_rule)


def sum_all(x: Tensor) -> Tensor:
    """Sum of all elements as a shape (1,) tensor."""
    original = x.shape

    def backward_rule(grad):
        return (np.full(original, grad[0]),)

    return make_result("sum_all", (x,), np.array([x.values.sum()]), backward_rule)
