"""
Training Metrics

This module records and interprets the learning curves of a run. It includes:
1. MetricRow / RunSummary - one evaluation point and the outcome of a run
2. detect_event - first step at which an accuracy crosses a threshold
3. grokking_signature - classify a run from its two event steps
4. write_metrics / read_metrics - the metrics CSV, read back exactly
5. summary_to_dict - the summary.json object
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional

from tensorEngine.errors import ContractError, GrokLabError

logger = logging.getLogger(__name__)

METRICS_HEADER = ["step", "train_loss", "val_loss", "train_acc", "val_acc", "lr_effective"]
SUMMARY_KEYS = (
    "memorization_step",
    "generalization_step",
    "gap_ratio",
    "signature",
    "final_train_acc",
    "final_val_acc",
    "diverged",
    "wall_time_seconds",
)

GROKKED = "grokked"
GENERALIZED_WITHOUT_GAP = "generalized-without-gap"
MEMORIZED_ONLY = "memorized-only"
NO_FIT = "no-fit"
SIGNATURES = (GROKKED, GENERALIZED_WITHOUT_GAP, MEMORIZED_ONLY, NO_FIT)


class MetricsParseError(GrokLabError, ValueError):
    """Raised when a metrics CSV does not match the expected format."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class MetricRow:
    step: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float
    lr_effective: float


@dataclass
class RunSummary:
    """Outcome of one run; event steps are None when the threshold was never reached."""

    memorization_step: Optional[int] = None
    generalization_step: Optional[int] = None
    gap_ratio: Optional[float] = None
    final_train_acc: float = 0.0
    final_val_acc: float = 0.0
    wall_time_seconds: float = 0.0
    diverged: bool = False
    diverged_at_step: Optional[int] = None
    signature: str = NO_FIT
    steps_taken: int = 0


def detect_event(rows: List[MetricRow], which: str, threshold: float) -> Optional[int]:
    """
    Find the first evaluated step whose accuracy reaches a threshold.

    Args:
        rows (list): Metric rows in step order
        which (str): "train" or "val"
        threshold (float): Accuracy threshold in (0, 1]

    Returns:
        int or None: The first step with accuracy >= threshold
    """
    if which not in ("train", "val"):
        raise ContractError(f"which must be 'train' or 'val', got {which!r}")
    for row in rows:
        accuracy = row.train_acc if which == "train" else row.val_acc
        if accuracy >= threshold:
            return row.step
    return None


def calculate_gap_ratio(memorization_step: Optional[int], generalization_step: Optional[int]) -> Optional[float]:
    if memorization_step is None or generalization_step is None:
        return None
    return generalization_step / max(1, memorization_step)


def grokking_signature(summary: RunSummary, min_gap_ratio: float = 5.0) -> str:
    """
    Classify a run by its memorization and generalization steps.

    Args:
        summary (RunSummary): Holds the two event steps
        min_gap_ratio (float): Smallest generalization/memorization ratio that counts as grokking

    Returns:
        str: One of "grokked", "generalized-without-gap", "memorized-only", "no-fit"
    """
    memorized = summary.memorization_step is not None
    generalized = summary.generalization_step is not None
    if memorized and generalized:
        ratio = calculate_gap_ratio(summary.memorization_step, summary.generalization_step)
        return GROKKED if ratio >= min_gap_ratio else GENERALIZED_WITHOUT_GAP
    if memorized:
        return MEMORIZED_ONLY
    return NO_FIT


def format_float(value: float) -> str:
    """17 significant digits, enough to read back the identical double."""
    return f"{value:.17g}"


def write_metrics(rows: List[MetricRow], path: str) -> None:
    """Write metric rows as CSV with the fixed header."""
    with open(path, "w", newline="") as f:
        f.write(",".join(METRICS_HEADER) + "\n")
        for row in rows:
            values = [row.train_loss, row.val_loss, row.train_acc, row.val_acc, row.lr_effective]
            f.write(",".join([str(row.step)] + [format_float(value) for value in values]) + "\n")


def read_metrics(path: str) -> List[MetricRow]:
    """
    Read a metrics CSV written by write_metrics.

    Raises:
        MetricsParseError: On a wrong header, a wrong field count or an unparsable value
    """
    rows = []
    with open(path) as f:
        header = f.readline().rstrip("\n")
        if header.split(",") != METRICS_HEADER:
            raise MetricsParseError(f"expected header {','.join(METRICS_HEADER)}, got {header}", 1)
        for line_number, line in enumerate(f, start=2):
            fields = line.rstrip("\n").split(",")
            if len(fields) != len(METRICS_HEADER):
                raise MetricsParseError(f"expected {len(METRICS_HEADER)} fields, got {len(fields)}", line_number)
            try:
                step = int(fields[0])
                values = [float(field) for field in fields[1:]]
            except ValueError as e:
                raise MetricsParseError(str(e), line_number) from e
            rows.append(MetricRow(step, *values))
    return rows


def summary_to_dict(summary: RunSummary, include_wall_time: bool = True) -> Dict:
    """The summary.json object, with exactly the SUMMARY_KEYS."""
    gap_ratio = summary.gap_ratio
    if gap_ratio is not None and not math.isfinite(gap_ratio):
        gap_ratio = None
    return {
        "memorization_step": summary.memorization_step,
        "generalization_step": summary.generalization_step,
        "gap_ratio": gap_ratio,
        "signature": summary.signature,
        "final_train_acc": summary.final_train_acc,
        "final_val_acc": summary.final_val_acc,
        "diverged": summary.diverged,
        "wall_time_seconds": summary.wall_time_seconds if include_wall_time else None,
    }
