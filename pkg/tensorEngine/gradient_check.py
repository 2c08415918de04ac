"""
Finite-Difference Gradient Checking

This module compares tape gradients against central finite differences.
It provides:
1. finite_diff_check - max relative error for a function of one tensor
2. finite_diff_check_params - the same check over every tensor of a parameter collection

The relative error of one coordinate is
|analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
"""

import logging
from typing import Callable, Dict, Mapping, Tuple

import numpy as np

from tensorEngine.errors import ContractError
from tensorEngine.tensor import Tape, Tensor, backward, no_grad

logger = logging.getLogger(__name__)

DENOMINATOR_FLOOR = 1e-8


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max coordinate-wise relative error between two gradient arrays."""
    denominator = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), DENOMINATOR_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denominator))


def _check_step(h: float) -> None:
    if not 0 < h <= 1e-2:
        raise ContractError(f"finite difference step must lie in (0, 1e-2], got {h}")


def _scalar(value: Tensor) -> float:
    if value.size != 1:
        raise ContractError(f"gradient check needs a scalar-valued function, got shape {value.shape}")
    return value.item()


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-4) -> float:
    """
    Compare the tape gradient of a scalar function with central differences.

    Args:
        f (callable): Deterministic function from a Tensor to a scalar Tensor
        x (Tensor): Point at which to check the gradient
        h (float): Step size in (0, 1e-2]

    Returns:
        float: The maximum relative error over all coordinates of x
    """
    _check_step(h)
    point = Tensor(x.values, requires_grad=True)
    with Tape() as tape:
        value = f(point)
    _scalar(value)
    backward(tape, value, params=[point])
    analytic = point.grad.copy()

    numeric = np.zeros_like(analytic)
    base = np.array(x.values)
    with no_grad():
        for index in np.ndindex(base.shape):
            shifted = base.copy()
            shifted[index] += h
            upper = _scalar(f(Tensor(shifted)))
            shifted[index] -= 2 * h
            lower = _scalar(f(Tensor(shifted)))
            numeric[index] = (upper - lower) / (2 * h)
    return relative_error(analytic, numeric)


def finite_diff_check_params(
    f: Callable[[Dict[str, Tensor]], Tensor],
    params: Mapping[str, Tensor],
    h: float = 1e-4,
) -> Tuple[float, str]:
    """
    Run the finite-difference check over every coordinate of every parameter.

    Args:
        f (callable): Maps a {path: Tensor} dict to a scalar loss Tensor
        params (mapping): Parameter tensors keyed by path
        h (float): Step size in (0, 1e-2]

    Returns:
        tuple: (max relative error, path of the parameter where it occurred)
    """
    _check_step(h)
    live = {path: Tensor(tensor.values, requires_grad=True, name=path) for path, tensor in params.items()}
    with Tape() as tape:
        value = f(live)
    _scalar(value)
    backward(tape, value, params=live.values())

    worst_error, worst_path = 0.0, ""
    with no_grad():
        for path in sorted(live):
            base = np.array(live[path].values)
            numeric = np.zeros_like(base)
            frozen = {name: tensor.detach() for name, tensor in live.items()}
            for index in np.ndindex(base.shape):
                shifted = base.copy()
                shifted[index] += h
                frozen[path] = Tensor(shifted)
                upper = _scalar(f(frozen))
                shifted[index] -= 2 * h
                frozen[path] = Tensor(shifted)
                lower = _scalar(f(frozen))
                numeric[index] = (upper - lower) / (2 * h)
            error = relative_error(live[path].grad, numeric)
            logger.debug("Gradient check %s: max relative error %.3e", path, error)
            if error > worst_error:
                worst_error, worst_path = error, path
    return worst_error, worst_path
