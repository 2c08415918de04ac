"""
Decoder-Only Transformer

Pre-norm decoder blocks with causal multi-head self-attention and a relu
feed-forward layer. The class logits are read from the final sequence
position only.
"""

import logging
from typing import Dict, Mapping, Optional

import numpy as np

from modelZoo.helper_functions import calculate_causal_mask, calculate_sinusoidal_table
from modelZoo.model_params import TransformerConfig
from tensorEngine import ops
from tensorEngine.errors import ContractError, TokenIndexError
from tensorEngine.tensor import Tensor

logger = logging.getLogger(__name__)


def _norm(x: Tensor, params: Mapping[str, Tensor], prefix: str, config: TransformerConfig) -> Tensor:
    if not config.use_layer_norm:
        return x
    return ops.layer_norm(x, params[f"{prefix}.gain"], params[f"{prefix}.bias"], eps=config.layer_norm_eps)


def _attention(
    h: Tensor,
    params: Mapping[str, Tensor],
    layer: int,
    config: TransformerConfig,
    cache: Optional[Dict[str, np.ndarray]],
) -> Tensor:
    """Masked multi-head self-attention of one block."""
    prefix = f"layer{layer}.attn"
    q = ops.matmul(h, params[f"{prefix}.wq"])
    k = ops.matmul(h, params[f"{prefix}.wk"])
    v = ops.matmul(h, params[f"{prefix}.wv"])
    mask = calculate_causal_mask(config.seq_len)
    score_scale = 1.0 / np.sqrt(config.head_dim)

    heads, patterns = [], []
    for head in range(config.n_heads):
        lo, hi = head * config.head_dim, (head + 1) * config.head_dim
        q_head, k_head, v_head = ops.slice_last(q, lo, hi), ops.slice_last(k, lo, hi), ops.slice_last(v, lo, hi)
        scores = ops.scale(ops.batched_matmul(q_head, ops.transpose_last(k_head)), score_scale)
        pattern = ops.softmax(ops.add_constant(scores, mask))
        patterns.append(pattern.values)
        heads.append(ops.batched_matmul(pattern, v_head))

    if cache is not None:
        # batch x heads x query x key
        cache[f"attn.{layer}"] = np.stack(patterns, axis=1)
    merged = heads[0] if len(heads) == 1 else ops.concat_last(heads)
    return ops.matmul(merged, params[f"{prefix}.wo"])


def _feed_forward(h: Tensor, params: Mapping[str, Tensor], layer: int) -> Tensor:
    prefix = f"layer{layer}.ffn"
    hidden = ops.relu(ops.add(ops.matmul(h, params[f"{prefix}.w1"]), params[f"{prefix}.b1"]))
    return ops.add(ops.matmul(hidden, params[f"{prefix}.w2"]), params[f"{prefix}.b2"])


def forward_transformer(
    params: Mapping[str, Tensor],
    config: TransformerConfig,
    token_ids,
    cache: Optional[Dict[str, np.ndarray]] = None,
) -> Tensor:
    """
    Run the transformer on a batch of token sequences.

    Args:
        params: Parameter tensors keyed by path
        config (TransformerConfig): The architecture
        token_ids: Integer array of shape (batch, seq_len)
        cache (dict, optional): Receives "embed", "resid.{i}" (residual stream
            after block i) and "attn.{i}" (attention patterns of block i)

    Returns:
        Tensor: Logits of shape (batch, n_classes)

    Raises:
        ContractError: If the sequence length differs from config.seq_len
        TokenIndexError: If a token id is outside [0, vocab_size)
    """
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 2 or ids.shape[1] != config.seq_len:
        raise ContractError(f"Transformer expects token ids of shape (batch, {config.seq_len}), got {ids.shape}")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise TokenIndexError(f"Token ids must lie in [0, {config.vocab_size})")

    x = ops.embedding_lookup(params["embed"], ids)
    if config.positional == "learned":
        x = ops.add(x, params["pos_embed"])
    else:
        x = ops.add_constant(x, calculate_sinusoidal_table(config.seq_len, config.d_model))
    if cache is not None:
        cache["embed"] = x.values

    for layer in range(config.n_layers):
        x = ops.add(x, _attention(_norm(x, params, f"layer{layer}.ln1", config), params, layer, config, cache))
        x = ops.add(x, _feed_forward(_norm(x, params, f"layer{layer}.ln2", config), params, layer))
        if cache is not None:
            cache[f"resid.{layer}"] = x.values

    x = _norm(x, params, "ln_final", config)
    return ops.matmul(ops.select_position(x, -1), params["unembed"])
