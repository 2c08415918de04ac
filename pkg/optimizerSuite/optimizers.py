"""
Optimizers

This module implements the parameter update rules used in training. It includes:
1. OptimConfig / OptimState - hyperparameters and the Adam moment buffers
2. warmup_lr - linear learning-rate warmup
3. sgd_step, adam_step, adamw_step - the update rules
4. apply_update_noise / apply_weight_noise - the two noise interventions
5. optimizer_step - dispatch on the configured kind, advancing the step counter

Every step is a pure function over {path: ndarray} maps: it returns new arrays
and a new state and never mutates its inputs. Every update is applied as
theta + lr_t * (delta + noise), so with zero noise it reduces to the plain rule.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from tensorEngine.errors import ContractError, GrokLabError

logger = logging.getLogger(__name__)

OPTIMIZER_KINDS = ("sgd", "adam", "adamw")
MAX_STEP = 2 ** 53

Arrays = Dict[str, np.ndarray]


class OptimConfigError(GrokLabError, ValueError):
    """Raised for invalid optimizer hyperparameters or unknown variant names."""


@dataclass(frozen=True)
class OptimConfig:
    """Optimizer hyperparameters; batch_size 0 means full batch."""

    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    weight_decay: float = 0.0
    l2_coeff: float = 0.0
    warmup_steps: int = 10
    update_noise_std: float = 0.0
    weight_noise_std: float = 0.0
    batch_size: int = 0
    noise_seed: int = 0

    def validate(self) -> None:
        if self.kind not in OPTIMIZER_KINDS:
            raise OptimConfigError(f"Unknown optimizer kind: {self.kind}. Valid kinds are: {', '.join(OPTIMIZER_KINDS)}")
        if not self.lr > 0:
            raise OptimConfigError(f"lr must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise OptimConfigError(f"betas must lie in [0, 1), got ({self.beta1}, {self.beta2})")
        if not self.eps > 0:
            raise OptimConfigError(f"eps must be positive, got {self.eps}")
        for name in ("weight_decay", "l2_coeff", "update_noise_std", "weight_noise_std"):
            if getattr(self, name) < 0:
                raise OptimConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.warmup_steps < 0 or self.batch_size < 0:
            raise OptimConfigError("warmup_steps and batch_size must be >= 0")
        if self.kind == "sgd" and self.weight_decay > 0 and self.l2_coeff > 0:
            raise OptimConfigError("SGD takes either l2_coeff or weight_decay, not both")
        if self.kind == "adam" and self.weight_decay > 0:
            raise OptimConfigError("Adam ignores weight_decay; use kind 'adamw' for decoupled decay or l2_coeff for coupled L2")


@dataclass
class OptimState:
    """First and second moments per parameter path, and the number of steps taken."""

    m: Arrays = field(default_factory=dict)
    v: Arrays = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros(cls, params: Mapping[str, np.ndarray]) -> "OptimState":
        return cls(
            m={path: np.zeros_like(values) for path, values in params.items()},
            v={path: np.zeros_like(values) for path, values in params.items()},
            t=0,
        )


class NoiseStreams:
    """
    The two noise generators of a run, spawned from one seed.

    Weight noise and update noise draw from independent streams, and neither
    shares state with the data split or minibatch order.
    """

    def __init__(self, noise_seed: int):
        weight_seq, update_seq = np.random.SeedSequence(noise_seed).spawn(2)
        self.weight = np.random.default_rng(weight_seq)
        self.update = np.random.default_rng(update_seq)


def warmup_lr(config: OptimConfig, t: int) -> float:
    """
    Effective learning rate at step t (t starts at 1).

    Args:
        config (OptimConfig): Holds lr and warmup_steps (0 disables warmup)
        t (int): Step index

    Returns:
        float: lr * min(1, t / warmup_steps)
    """
    if t < 1:
        raise ContractError(f"Step index starts at 1, got {t}")
    if config.warmup_steps == 0 or t >= config.warmup_steps:
        return config.lr
    return config.lr * (t / config.warmup_steps)


def apply_update_noise(delta, config: OptimConfig, rng: np.random.Generator):
    """
    Add N(0, update_noise_std^2) noise to every coordinate of an update direction.

    Args:
        delta: An ndarray, or a {path: ndarray} map (noised in sorted path order)
        config (OptimConfig): Holds update_noise_std
        rng (np.random.Generator): The update-noise stream

    Returns:
        The noisy direction, same structure as delta; unchanged when the std is 0
    """
    std = config.update_noise_std
    if std == 0:
        return delta
    if isinstance(delta, Mapping):
        return {path: delta[path] + rng.normal(0.0, std, size=np.shape(delta[path])) for path in sorted(delta)}
    return delta + rng.normal(0.0, std, size=np.shape(delta))


def apply_weight_noise(params: Mapping[str, np.ndarray], config: OptimConfig, rng: np.random.Generator) -> Arrays:
    """
    Return W + sigma * eps per parameter, for use in one forward/backward pass.

    The clean parameters are left untouched; no draws are made when sigma is 0.
    """
    std = config.weight_noise_std
    if std == 0:
        return dict(params)
    return {path: params[path] + std * rng.standard_normal(np.shape(params[path])) for path in sorted(params)}


def _apply(params: Mapping[str, np.ndarray], direction: Mapping[str, np.ndarray], lr_t: float) -> Arrays:
    return {path: params[path] + lr_t * direction[path] for path in sorted(params)}


def sgd_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    config: OptimConfig,
    t: int,
    update_rng: Optional[np.random.Generator] = None,
) -> Arrays:
    """
    One SGD step: theta - lr_t * (g + c * theta).

    c is l2_coeff in L2 mode and weight_decay in decay mode. Both modes go
    through this same expression, so equal coefficients give identical results.
    """
    coeff = config.l2_coeff if config.l2_coeff > 0 else config.weight_decay
    lr_t = warmup_lr(config, t)
    direction = {path: -(grads[path] + coeff * params[path]) for path in sorted(params)}
    if update_rng is not None:
        direction = apply_update_noise(direction, config, update_rng)
    return _apply(params, direction, lr_t)


def _adam_direction(
    params: Mapping[str, np.ndarray],
    state: OptimState,
    grads: Mapping[str, np.ndarray],
    config: OptimConfig,
    t: int,
) -> Tuple[Arrays, OptimState]:
    """Bias-corrected Adam direction -m_hat / (sqrt(v_hat) + eps) and the new moments."""
    if t > MAX_STEP:
        raise ContractError(f"Step counter overflow: t = {t} exceeds 2^53")
    b1, b2 = config.beta1, config.beta2
    correction1 = 1.0 - b1 ** t
    correction2 = 1.0 - b2 ** t
    m, v, direction = {}, {}, {}
    for path in sorted(params):
        g = grads[path]
        if config.l2_coeff > 0:
            # Coupled L2: the penalty gradient goes through the moments.
            g = g + config.l2_coeff * params[path]
        m[path] = b1 * state.m[path] + (1.0 - b1) * g
        v[path] = b2 * state.v[path] + (1.0 - b2) * (g * g)
        m_hat = m[path] / correction1
        v_hat = v[path] / correction2
        direction[path] = -m_hat / (np.sqrt(v_hat) + config.eps)
    return direction, OptimState(m=m, v=v, t=t)


def adam_step(
    params: Mapping[str, np.ndarray],
    state: OptimState,
    grads: Mapping[str, np.ndarray],
    config: OptimConfig,
    t: int,
    update_rng: Optional[np.random.Generator] = None,
) -> Tuple[Arrays, OptimState]:
    """
    One Adam step with bias correction.

    Args:
        params: Parameter arrays keyed by path
        state (OptimState): Moments before the step
        grads: Gradient arrays keyed by path
        config (OptimConfig): Hyperparameters
        t (int): Step index, starting at 1
        update_rng (np.random.Generator, optional): Update-noise stream

    Returns:
        tuple: (new parameter arrays, new state)

    Raises:
        ContractError: If t exceeds 2^53
    """
    direction, new_state = _adam_direction(params, state, grads, config, t)
    if update_rng is not None:
        direction = apply_update_noise(direction, config, update_rng)
    return _apply(params, direction, warmup_lr(config, t)), new_state


def adamw_step(
    params: Mapping[str, np.ndarray],
    state: OptimState,
    grads: Mapping[str, np.ndarray],
    config: OptimConfig,
    t: int,
    update_rng: Optional[np.random.Generator] = None,
) -> Tuple[Arrays, OptimState]:
    """
    One AdamW step: the Adam update on the raw gradient, then decoupled decay.

    theta' = theta + lr_t * (delta + noise) - lr_t * weight_decay * theta
    """
    direction, new_state = _adam_direction(params, state, grads, config, t)
    if update_rng is not None:
        direction = apply_update_noise(direction, config, update_rng)
    lr_t = warmup_lr(config, t)
    decay = lr_t * config.weight_decay
    updated = {path: params[path] + lr_t * direction[path] - decay * params[path] for path in sorted(params)}
    return updated, new_state


def optimizer_step(
    params: Mapping[str, np.ndarray],
    state: OptimState,
    grads: Mapping[str, np.ndarray],
    config: OptimConfig,
    update_rng: Optional[np.random.Generator] = None,
) -> Tuple[Arrays, OptimState]:
    """
    Advance the step counter by one and apply the configured update rule.

    Args:
        params: Parameter arrays keyed by path
        state (OptimState): State before the step (state.t steps taken so far)
        grads: Gradient arrays keyed by path
        config (OptimConfig): Hyperparameters
        update_rng (np.random.Generator, optional): Update-noise stream

    Returns:
        tuple: (new parameter arrays, new state with t incremented by exactly 1)
    """
    t = state.t + 1
    if config.kind == "sgd":
        return sgd_step(params, grads, config, t, update_rng), OptimState(m=state.m, v=state.v, t=t)
    if config.kind == "adam":
        return adam_step(params, state, grads, config, t, update_rng)
    if config.kind == "adamw":
        return adamw_step(params, state, grads, config, t, update_rng)
    raise OptimConfigError(f"Unknown optimizer kind: {config.kind}. Valid kinds are: {', '.join(OPTIMIZER_KINDS)}")
