"""
Helper Functions for Experiment Sweeps

This module provides the small formatting helpers shared by the sweep,
report and command modules.
"""

import math
from typing import Optional


def format_cell(value) -> str:
    """
    Format one sweep.csv cell.

    Args:
        value: None, bool, int, float or str

    Returns:
        str: "" for None, the shortest exact repr for floats, str() otherwise
    """
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_steps(median: float, max_steps: Optional[int]) -> str:
    """
    Format a median steps-until-generalization value.

    Args:
        median (float): Median over seeds; inf when most seeds never generalized
        max_steps (int, optional): Step budget of the sweep

    Returns:
        str: The step count, or ">max_steps" (">N" when the budget is known)
    """
    if math.isinf(median):
        return f">{max_steps}" if max_steps is not None else ">max_steps"
    return str(int(median)) if float(median).is_integer() else f"{median:g}"


def format_accuracy(value: float) -> str:
    return f"{value:.4f}"


def run_dir_name(alpha: float, variant: str, seed: int) -> str:
    """Subdirectory name of one sweep cell, e.g. alpha0.3_adamw-wd1_seed0."""
    return f"alpha{alpha:g}_{variant}_seed{seed}"
