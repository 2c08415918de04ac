"""
Sweep Reports

This module aggregates a sweep.csv into the two summary tables of a sweep:
1. Steps until generalization - median generalization step over seeds, per (alpha, variant)
2. Final validation accuracy - median final_val_acc over seeds, per (alpha, variant)

Runs that never generalized count as +inf in the median, so a cell whose
median is +inf prints as ">N" where N is the sweep's step budget.
Rows with signature "error" are left out.
"""

import json
import logging
import os
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from experimentSweeps.helper_functions import format_accuracy, format_steps
from tensorEngine.errors import GrokLabError

logger = logging.getLogger(__name__)

STEPS_TABLE = "steps_until_generalization"
ACCURACY_TABLE = "final_val_acc"
REPORT_HEADER = ["table", "alpha", "variant", "value"]
TABLE_TITLES = {
    STEPS_TABLE: "Steps until generalization (median over seeds)",
    ACCURACY_TABLE: "Final validation accuracy (median over seeds)",
}


class ReportError(GrokLabError, ValueError):
    """Raised when a sweep.csv has nothing to report."""


def load_sweep(path: str) -> pd.DataFrame:
    """
    Read a sweep.csv and keep the successful runs.

    Args:
        path (str): Path to sweep.csv

    Returns:
        pd.DataFrame: One row per successful run

    Raises:
        ReportError: If the file has no successful runs
    """
    try:
        frame = pd.read_csv(path, dtype={"variant": str, "signature": str})
    except pd.errors.EmptyDataError:
        raise ReportError(f"{path} is empty") from None
    if frame.empty:
        raise ReportError(f"{path} has no rows")
    failed = frame["signature"] == "error"
    if failed.any():
        logger.warning("Skipping %d failed run(s) in %s", int(failed.sum()), path)
    frame = frame[~failed]
    if frame.empty:
        raise ReportError(f"Every run in {path} failed")
    return frame


def resolve_max_steps(sweep_path: str, max_steps: Optional[int] = None) -> Optional[int]:
    """
    Find the step budget shown in ">N" cells.

    An explicit value wins; otherwise base.steps is read from the
    sweep_spec.json next to sweep.csv. None when neither is available.
    """
    if max_steps is not None:
        return max_steps
    spec_path = os.path.join(os.path.dirname(os.path.abspath(sweep_path)), "sweep_spec.json")
    if not os.path.exists(spec_path):
        return None
    try:
        with open(spec_path) as f:
            return int(json.load(f)["base"]["steps"])
    except (KeyError, TypeError, ValueError) as e:
        logger.warning("Could not read steps from %s: %s", spec_path, e)
        return None


def steps_until_generalization(frame: pd.DataFrame) -> pd.DataFrame:
    """Median generalization step per (alpha, variant); absent steps count as +inf."""
    steps = pd.to_numeric(frame["generalization_step"], errors="coerce").fillna(np.inf)
    grouped = steps.groupby([frame["alpha"], frame["variant"]]).median()
    return grouped.unstack("variant")


def final_val_accuracy(frame: pd.DataFrame) -> pd.DataFrame:
    grouped = frame.groupby(["alpha", "variant"])["final_val_acc"].median()
    return grouped.unstack("variant")


def build_report(frame: pd.DataFrame, max_steps: Optional[int] = None) -> Dict[str, pd.DataFrame]:
    """
    Build both report tables as formatted string cells.

    Args:
        frame (pd.DataFrame): Output of load_sweep
        max_steps (int, optional): Step budget for ">N" cells

    Returns:
        dict: Table name -> DataFrame indexed by alpha with one column per variant
    """
    steps = steps_until_generalization(frame)
    accuracy = final_val_accuracy(frame)
    return {
        STEPS_TABLE: steps.apply(lambda column: column.map(lambda value: "" if pd.isna(value) else format_steps(value, max_steps))),
        ACCURACY_TABLE: accuracy.apply(lambda column: column.map(lambda value: "" if pd.isna(value) else format_accuracy(value))),
    }


def report_rows(tables: Dict[str, pd.DataFrame]) -> pd.DataFrame:
    """Flatten the tables into report.csv rows (table, alpha, variant, value)."""
    records: List[Dict] = []
    for name in (STEPS_TABLE, ACCURACY_TABLE):
        table = tables[name]
        for alpha in table.index:
            for variant in table.columns:
                value = table.at[alpha, variant]
                if value == "":
                    continue
                records.append({"table": name, "alpha": repr(float(alpha)), "variant": variant, "value": value})
    return pd.DataFrame.from_records(records, columns=REPORT_HEADER)


def render_tables(tables: Dict[str, pd.DataFrame]) -> str:
    """Aligned plain-text rendering of both tables."""
    blocks = []
    for name in (STEPS_TABLE, ACCURACY_TABLE):
        table = tables[name].copy()
        table.index = [f"{alpha:g}" for alpha in table.index]
        table.index.name = "alpha"
        table.columns.name = None
        blocks.append(f"{TABLE_TITLES[name]}\n{table.to_string()}")
    return "\n\n".join(blocks) + "\n"


def write_report(sweep_path: str, out_path: Optional[str] = None, max_steps: Optional[int] = None) -> str:
    """
    Aggregate a sweep.csv, write report.csv and return the text tables.

    Args:
        sweep_path (str): Path to sweep.csv
        out_path (str, optional): Where to write report.csv (default: next to sweep.csv)
        max_steps (int, optional): Step budget for ">N" cells (see resolve_max_steps)

    Returns:
        str: The aligned plain-text tables
    """
    frame = load_sweep(sweep_path)
    budget = resolve_max_steps(sweep_path, max_steps)
    tables = build_report(frame, budget)
    out_path = out_path or os.path.join(os.path.dirname(os.path.abspath(sweep_path)), "report.csv")
    report_rows(tables).to_csv(out_path, index=False, lineterminator="\n")
    logger.info("Successfully wrote report for %d runs to %s", len(frame), out_path)
    return render_tables(tables)

