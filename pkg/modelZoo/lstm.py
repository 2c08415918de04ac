"""
LSTM Classifier

A single LSTM cell consumes the token embeddings one position at a time; the
final hidden state goes through a linear head.

Gate pre-activations are packed as [input | forget | candidate | output] along
the last axis of lstm.w_x, lstm.w_h and lstm.b:

    i = sigmoid(.), f = sigmoid(.), g = tanh(.), o = sigmoid(.)
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t)
"""

from typing import Dict, Mapping, Optional

import numpy as np

from modelZoo.model_params import LSTMConfig
from tensorEngine import ops
from tensorEngine.errors import ContractError, TokenIndexError
from tensorEngine.tensor import Tensor


def forward_lstm(
    params: Mapping[str, Tensor],
    config: LSTMConfig,
    token_ids,
    cache: Optional[Dict[str, np.ndarray]] = None,
) -> Tensor:
    """
    Run the LSTM over a batch of token sequences of any length >= 1.

    Args:
        params: Parameter tensors keyed by path
        config (LSTMConfig): The architecture
        token_ids: Integer array of shape (batch, seq)
        cache (dict, optional): Receives "h.{t}" and "c.{t}" for every step t

    Returns:
        Tensor: Logits of shape (batch, n_classes)
    """
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 2:
        raise ContractError(f"LSTM expects token ids of shape (batch, seq), got {ids.shape}")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise TokenIndexError(f"Token ids must lie in [0, {config.vocab_size})")

    size = config.hidden
    embedded = ops.embedding_lookup(params["embed"], ids)
    h = Tensor(np.zeros((ids.shape[0], size)))
    c = Tensor(np.zeros((ids.shape[0], size)))
    for t in range(ids.shape[1]):
        x_t = ops.select_position(embedded, t)
        gates = ops.add(ops.add(ops.matmul(x_t, params["lstm.w_x"]), ops.matmul(h, params["lstm.w_h"])), params["lstm.b"])
        input_gate = ops.sigmoid(ops.slice_last(gates, 0, size))
        forget_gate = ops.sigmoid(ops.slice_last(gates, size, 2 * size))
        candidate = ops.tanh(ops.slice_last(gates, 2 * size, 3 * size))
        output_gate = ops.sigmoid(ops.slice_last(gates, 3 * size, 4 * size))
        c = ops.add(ops.mul(forget_gate, c), ops.mul(input_gate, candidate))
        h = ops.mul(output_gate, ops.tanh(c))
        if cache is not None:
            cache[f"h.{t}"] = h.values
            cache[f"c.{t}"] = c.values
    return ops.add(ops.matmul(h, params["head.w"]), params["head.b"])
