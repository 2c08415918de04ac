"""
Model Zoo

Named model presets and a single forward entry point for every architecture.
"""

import logging
from typing import Dict, Mapping, Optional

import numpy as np

from modelZoo.lstm import forward_lstm
from modelZoo.mlp import forward_mlp
from modelZoo.model_params import LSTMConfig, MLPConfig, ModelConfig, ModelConfigError, TransformerConfig
from modelZoo.transformer import forward_transformer
from modularData.modular_data import ModTask, TokenVocab
from tensorEngine.tensor import Tensor

logger = logging.getLogger(__name__)

MODEL_NAMES = ("transformer", "transformer-simplified", "mlp", "lstm")


def build_model_config(
    name: str,
    encoding: str,
    task: ModTask,
    vocab: Optional[TokenVocab] = None,
    init_scale: float = 1.0,
    use_layer_norm: bool = True,
    positional: str = "learned",
) -> ModelConfig:
    """
    Build the configuration of a named preset for a task and encoding.

    The simple encoding uses p + 1 input tokens (residues plus the p marker)
    and p classes; the dictionary encoding uses the vocabulary size for both.

    Args:
        name (str): One of MODEL_NAMES
        encoding (str): "simple" or "dictionary"
        task (ModTask): The task
        vocab (TokenVocab, optional): Dictionary vocabulary (default assignment when omitted)
        init_scale (float): Initialization scale
        use_layer_norm (bool): Transformer layer norm switch
        positional (str): Transformer positional encoding, "learned" or "sinusoidal"

    Returns:
        The validated configuration

    Raises:
        ModelConfigError: For unknown names or the MLP with the dictionary encoding
    """
    if encoding == "simple":
        vocab_size, n_classes, seq_len = task.p + 1, task.p, 3
    elif encoding == "dictionary":
        size = (vocab or TokenVocab.default(task.p)).size
        vocab_size, n_classes, seq_len = size, size, 4
    else:
        raise ModelConfigError(f"Unknown encoding: {encoding}")

    if name in ("transformer", "transformer-simplified"):
        config = TransformerConfig(
            n_layers=2 if name == "transformer" else 1,
            vocab_size=vocab_size,
            seq_len=seq_len,
            n_classes=n_classes,
            use_layer_norm=use_layer_norm,
            positional=positional,
            init_scale=init_scale,
        )
    elif name == "mlp":
        if encoding != "simple":
            raise ModelConfigError("The mlp model takes the simple encoding only")
        config = MLPConfig(vocab_size=vocab_size, n_classes=n_classes, init_scale=init_scale)
    elif name == "lstm":
        config = LSTMConfig(vocab_size=vocab_size, n_classes=n_classes, init_scale=init_scale)
    else:
        raise ModelConfigError(f"Unknown model: {name}. Valid models are: {', '.join(MODEL_NAMES)}")
    config.validate()
    return config


def forward(
    params: Mapping[str, Tensor],
    config: ModelConfig,
    token_ids,
    cache: Optional[Dict[str, np.ndarray]] = None,
) -> Tensor:
    """Dispatch to the forward function of the configured architecture."""
    if isinstance(config, TransformerConfig):
        return forward_transformer(params, config, token_ids, cache)
    if isinstance(config, MLPConfig):
        return forward_mlp(params, config, token_ids, cache)
    if isinstance(config, LSTMConfig):
        return forward_lstm(params, config, token_ids, cache)
    raise ModelConfigError(f"Unsupported configuration type: {type(config).__name__}")
