"""
Named optimizer variants compared in the optimizer study.

All start from Adam with lr 1e-3, betas (0.9, 0.98), 10 warmup steps and
full-batch updates, and change one thing each.
"""

from dataclasses import replace
from typing import Dict, List

from optimizerSuite.optimizers import OptimConfig, OptimConfigError

BASELINE = OptimConfig(kind="adam", lr=1e-3, beta1=0.9, beta2=0.98, warmup_steps=10, batch_size=0)

VARIANT_OVERRIDES: Dict[str, Dict] = {
    "adam-lr-0.3x": {"lr": 3e-4},
    "adam-baseline": {},
    "adam-lr-3x": {"lr": 3e-3},
    "adam-update-noise": {"update_noise_std": 1.0},
    "adam-weight-noise": {"weight_noise_std": 0.01},
    "adam-minibatch-128": {"batch_size": 128},
    "adamw-wd1": {"kind": "adamw", "weight_decay": 1.0},
    "adamw-minibatch-128": {"kind": "adamw", "weight_decay": 1.0, "batch_size": 128},
}


def variant_names() -> List[str]:
    return list(VARIANT_OVERRIDES)


def make_variant(name: str, noise_seed: int = 0) -> OptimConfig:
    """
    Return the optimizer configuration of a named variant.

    Args:
        name (str): One of variant_names()
        noise_seed (int): Seed of the run's noise streams

    Returns:
        OptimConfig: The configuration

    Raises:
        OptimConfigError: For an unknown name
    """
    if name not in VARIANT_OVERRIDES:
        raise OptimConfigError(f"Unknown optimizer variant: {name}. Valid variants are: {', '.join(VARIANT_OVERRIDES)}")
    config = replace(BASELINE, noise_seed=noise_seed, **VARIANT_OVERRIDES[name])
    config.validate()
    return config
