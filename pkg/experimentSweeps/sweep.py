"""
Experiment Sweeps

This module runs a grid of training runs over training fractions, optimizer
variants and seeds. It includes:
1. SweepSpec - the JSON sweep file {base, alphas, variants, seeds, parallel_workers}
2. run_sweep_cell - one grid cell, returning a result row (or an error row)
3. run_sweep - the grid, serially or across worker processes
4. write_sweep_csv - the sorted sweep.csv

Rows are always sorted by (alpha, variant, seed), so the output does not depend
on worker count or completion order.
"""

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

from experimentSweeps.helper_functions import format_cell, run_dir_name
from optimizerSuite.variants import variant_names
from tensorEngine.errors import GrokLabError
from trainHarness.config import Config
from trainHarness.harness import RunConfig, make_run_config, run_training, save_run_outputs

logger = logging.getLogger(__name__)

SWEEP_HEADER = [
    "alpha",
    "variant",
    "seed",
    "memorization_step",
    "generalization_step",
    "gap_ratio",
    "signature",
    "final_val_acc",
]
BASE_KEYS = ("model", "encoding", "p", "steps", "eval_every", "init_scale", "weight_decay", "lr", "acc_threshold")
DEFAULT_BASE = {"model": "transformer-simplified", "encoding": "simple", "p": 97, "steps": 1800, "eval_every": 10}


class SweepSpecError(GrokLabError, ValueError):
    """Raised when a sweep file is malformed."""


@dataclass
class SweepSpec:
    """
    A grid of runs sharing one base configuration.

    base may set model, encoding, p, steps, eval_every, init_scale,
    weight_decay, lr and acc_threshold; weight_decay and lr are applied after
    each variant.
    """

    base: Dict[str, Any] = field(default_factory=dict)
    alphas: List[float] = field(default_factory=list)
    variants: List[str] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)
    parallel_workers: int = 1

    def validate(self) -> None:
        unknown = set(self.base) - set(BASE_KEYS)
        if unknown:
            raise SweepSpecError(f"Unknown base keys: {', '.join(sorted(unknown))}. Valid keys are: {', '.join(BASE_KEYS)}")
        if not self.alphas or not all(0 < alpha < 1 for alpha in self.alphas):
            raise SweepSpecError(f"alphas must be a non-empty list of values in (0, 1), got {self.alphas}")
        valid = variant_names()
        bad = [name for name in self.variants if name not in valid]
        if not self.variants or bad:
            raise SweepSpecError(f"Unknown optimizer variants: {', '.join(bad) or '(none given)'}. Valid variants are: {', '.join(valid)}")
        if not self.seeds:
            raise SweepSpecError("seeds must not be empty")
        if self.parallel_workers < 1:
            raise SweepSpecError(f"parallel_workers must be >= 1, got {self.parallel_workers}")

    @property
    def resolved_base(self) -> Dict[str, Any]:
        return {**DEFAULT_BASE, **self.base}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SweepSpec":
        try:
            spec = cls(
                base=dict(data.get("base", {})),
                alphas=[float(alpha) for alpha in data["alphas"]],
                variants=list(data["variants"]),
                seeds=[int(seed) for seed in data["seeds"]],
                parallel_workers=int(data.get("parallel_workers", 1)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SweepSpecError(f"Malformed sweep spec: {e}") from e
        spec.validate()
        return spec

    @classmethod
    def load(cls, path: str) -> "SweepSpec":
        try:
            with open(path) as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise SweepSpecError(f"{path} is not valid JSON: {e}") from e
        return cls.from_dict(data)

    def cells(self) -> List[Dict[str, Any]]:
        """Every (alpha, variant, seed) job, in sorted order."""
        return [
            {"alpha": alpha, "variant": variant, "seed": seed}
            for alpha in sorted(self.alphas)
            for variant in sorted(self.variants)
            for seed in sorted(self.seeds)
        ]


def cell_config(base: Dict[str, Any], alpha: float, variant: str, seed: int) -> RunConfig:
    """Run configuration of one grid cell from resolved base settings."""
    return make_run_config(
        alpha=alpha,
        model_name=base["model"],
        variant=variant,
        steps=base["steps"],
        seed=seed,
        p=base["p"],
        encoding=base["encoding"],
        eval_every=base["eval_every"],
        acc_threshold=base.get("acc_threshold", 0.99),
        init_scale=base.get("init_scale", 1.0),
        weight_decay=base.get("weight_decay"),
        lr=base.get("lr"),
    )


def run_sweep_cell(job: Dict[str, Any]) -> Dict[str, Any]:
    """
    Train one grid cell and return its sweep row.

    Args:
        job (dict): alpha, variant, seed, base (resolved base settings) and out_dir

    Returns:
        dict: The sweep row; failures give signature "error" and an "error" message
    """
    row = {"alpha": job["alpha"], "variant": job["variant"], "seed": job["seed"]}
    try:
        config = cell_config(job["base"], job["alpha"], job["variant"], job["seed"])
        rows, summary, params = run_training(config)
        run_dir = os.path.join(job["out_dir"], run_dir_name(job["alpha"], job["variant"], job["seed"]))
        save_run_outputs(run_dir, rows, summary, params, config)
    except Exception as e:
        logger.error("Sweep cell %s failed: %s", run_dir_name(job["alpha"], job["variant"], job["seed"]), e)
        return {**row, "signature": "error", "error": str(e)}
    return {
        **row,
        "memorization_step": summary.memorization_step,
        "generalization_step": summary.generalization_step,
        "gap_ratio": summary.gap_ratio,
        "signature": summary.signature,
        "final_val_acc": summary.final_val_acc,
    }


def resolve_workers(spec: SweepSpec, workers: Optional[int] = None) -> int:
    """Explicit argument first, then GROKLAB_WORKERS, then the sweep file's parallel_workers."""
    if workers is not None:
        return workers
    return Config.get_workers_override() or spec.parallel_workers


def run_sweep(spec: SweepSpec, out_dir: str, workers: Optional[int] = None) -> List[Dict[str, Any]]:
    """
    Run every cell of a sweep.

    Args:
        spec (SweepSpec): The sweep
        out_dir (str): Parent directory of the per-run subdirectories
        workers (int, optional): Worker processes (see resolve_workers)

    Returns:
        list: One row per cell, sorted by (alpha, variant, seed)
    """
    spec.validate()
    base = spec.resolved_base
    jobs = [{**cell, "base": base, "out_dir": out_dir} for cell in spec.cells()]
    workers = resolve_workers(spec, workers)
    logger.info("Requesting %d runs on %d worker(s)", len(jobs), workers)
    if workers == 1:
        rows = [run_sweep_cell(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_sweep_cell, jobs))
    rows.sort(key=lambda row: (row["alpha"], row["variant"], row["seed"]))
    failures = sum(1 for row in rows if row["signature"] == "error")
    logger.info("Successfully completed sweep: %d runs, %d failed", len(rows), failures)
    return rows


def write_sweep_csv(rows: List[Dict[str, Any]], path: str) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(SWEEP_HEADER) + "\n")
        for row in rows:
            f.write(",".join(format_cell(row.get(column)) for column in SWEEP_HEADER) + "\n")


def write_sweep_spec(spec: SweepSpec, path: str) -> None:
    """Store the resolved sweep file next to sweep.csv so report can find max_steps."""
    data = asdict(spec)
    data["base"] = spec.resolved_base
    with open(path, "w") as f:
        f.write(json.dumps(data, indent=2, sort_keys=True) + "\n")
