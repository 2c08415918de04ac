"""
Multilayer Perceptron

Token embeddings are concatenated into one vector per example and passed
through n_layers linear layers with relu between them.
"""

from typing import Dict, Mapping, Optional

import numpy as np

from modelZoo.model_params import MLPConfig
from tensorEngine import ops
from tensorEngine.errors import ContractError, TokenIndexError
from tensorEngine.tensor import Tensor


def forward_mlp(
    params: Mapping[str, Tensor],
    config: MLPConfig,
    token_ids,
    cache: Optional[Dict[str, np.ndarray]] = None,
) -> Tensor:
    """
    Run the MLP on a batch of simple-encoded examples.

    Args:
        params: Parameter tensors keyed by path
        config (MLPConfig): The architecture
        token_ids: Integer array of shape (batch, 3)
        cache (dict, optional): Receives "hidden.{k}", the activation after hidden layer k

    Returns:
        Tensor: Logits of shape (batch, n_classes)

    Raises:
        ContractError: If an example does not have exactly 3 tokens
    """
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 2 or ids.shape[1] != config.n_tokens:
        raise ContractError(f"MLP expects token ids of shape (batch, {config.n_tokens}), got {ids.shape}")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise TokenIndexError(f"Token ids must lie in [0, {config.vocab_size})")

    batch = ids.shape[0]
    h = ops.reshape(ops.embedding_lookup(params["embed"], ids), (batch, config.n_tokens * config.embed_dim))
    for k in range(config.n_layers):
        h = ops.add(ops.matmul(h, params[f"layer{k}.w"]), params[f"layer{k}.b"])
        if k < config.n_layers - 1:
            h = ops.relu(h)
            if cache is not None:
                cache[f"hidden.{k}"] = h.values
    return h
