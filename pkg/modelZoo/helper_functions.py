"""
Helper Functions for the Model Zoo

This module provides small numpy helpers used when building and running
the models in this package.
"""

from typing import Tuple

import numpy as np

MASKED_SCORE = -1e9


def draw_normal(rng: np.random.Generator, shape: Tuple[int, ...], std: float) -> np.ndarray:
    """
    Draw a float64 array from N(0, std^2).

    Args:
        rng (np.random.Generator): The seeded generator to consume
        shape (tuple): Shape of the array
        std (float): Standard deviation (0 gives exact zeros)

    Returns:
        np.ndarray: The drawn array
    """
    if std == 0:
        return np.zeros(shape)
    return rng.normal(0.0, std, size=shape)


def calculate_sinusoidal_table(seq_len: int, d_model: int) -> np.ndarray:
    """
    Calculate the fixed sinusoidal position table.

    Even columns hold sin(pos / 10000^(2i/d)) and odd columns the matching cos.

    Args:
        seq_len (int): Number of positions
        d_model (int): Width of the residual stream

    Returns:
        np.ndarray: Shape (seq_len, d_model)
    """
    positions = np.arange(seq_len, dtype=np.float64)[:, None]
    rates = np.power(10000.0, -np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    table = np.zeros((seq_len, d_model))
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates[: d_model // 2])
    return table


def calculate_causal_mask(seq_len: int) -> np.ndarray:
    """
    Calculate the additive causal mask.

    Entry (i, j) is 0 when j <= i and MASKED_SCORE when j > i, so after softmax
    position i puts exactly zero weight on later positions.

    Args:
        seq_len (int): Sequence length

    Returns:
        np.ndarray: Shape (seq_len, seq_len)
    """
    return np.triu(np.full((seq_len, seq_len), MASKED_SCORE), k=1)
