"""
Command-Line Commands

This module implements the groklab subcommands:
1. train - one training run, printing its summary JSON
2. sweep - a grid of runs from a JSON sweep file
3. report - aggregate tables from a sweep.csv
4. check - the numerical self-check suite

Each cmd_* function returns an exit status: 0 on success, 1 on invalid input
or failure, 2 when a training run diverged.
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from experimentSweeps.checks import run_checks
from experimentSweeps.report import write_report
from experimentSweeps.sweep import SweepSpec, run_sweep, write_sweep_csv, write_sweep_spec
from modelZoo.zoo import MODEL_NAMES
from modularData.modular_data import ENCODINGS, split_dataset, write_dataset_dump
from optimizerSuite.variants import variant_names
from tensorEngine.errors import GrokLabError
from trainHarness.config import Config
from trainHarness.harness import make_run_config, run_training, save_run_outputs
from trainHarness.metrics import summary_to_dict

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_DIVERGED = 2


class CommandParser(argparse.ArgumentParser):
    """ArgumentParser that exits with status 1 (not 2) on invalid flags."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_FAILURE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = CommandParser(prog="groklab", description="Grokking experiments on modular addition.")
    subcommands = parser.add_subparsers(dest="command", required=True, parser_class=CommandParser)

    train = subcommands.add_parser("train", help="Run one training run")
    train.add_argument("--p", type=int, default=97, help="Modulus")
    train.add_argument("--alpha", type=float, required=True, help="Training data fraction in (0, 1)")
    train.add_argument("--encoding", choices=ENCODINGS, default="simple")
    train.add_argument("--model", choices=MODEL_NAMES, default="transformer-simplified")
    train.add_argument("--optimizer", choices=variant_names(), default="adamw-wd1", help="Optimizer variant name")
    train.add_argument("--steps", type=int, default=25000)
    train.add_argument("--eval-every", type=int, default=10)
    train.add_argument("--seed", type=int, default=0, help="Data, init and noise seeds are seed, seed+1 and seed+2")
    train.add_argument("--out", help="Output directory (default: under GROKLAB_OUT_DIR)")
    train.add_argument("--init-scale", type=float, default=1.0)
    train.add_argument("--weight-decay", type=float, help="Overrides the variant's weight decay")
    train.add_argument("--lr", type=float, help="Overrides the variant's peak learning rate")
    train.add_argument("--acc-threshold", type=float, default=0.99)
    train.add_argument("--no-layer-norm", action="store_true")
    train.add_argument("--positional", choices=("learned", "sinusoidal"), default="learned")
    train.add_argument("--dump-dataset", action="store_true", help="Also write <out>/dataset.csv")
    train.add_argument("--progress", action="store_true", help="Show a progress bar")

    sweep = subcommands.add_parser("sweep", help="Run a grid of training runs")
    sweep.add_argument("spec", help="Sweep JSON file")
    sweep.add_argument("--out", help="Output directory (default: under GROKLAB_OUT_DIR)")
    sweep.add_argument("--workers", type=int, help="Worker processes (overrides GROKLAB_WORKERS and the file)")

    report = subcommands.add_parser("report", help="Aggregate a sweep.csv")
    report.add_argument("sweep_csv", help="Path to sweep.csv")
    report.add_argument("--out", help="Where to write report.csv (default: next to sweep.csv)")
    report.add_argument("--max-steps", type=int, help="Step budget shown for runs that never generalized")

    subcommands.add_parser("check", help="Run the numerical self-checks")
    return parser


def default_train_dir(args: argparse.Namespace) -> str:
    return os.path.join(Config.get_output_root(), f"{args.model}_{args.optimizer}_alpha{args.alpha:g}_seed{args.seed}")


def cmd_train(args: argparse.Namespace) -> int:
    """
    Train one model, write its output files and print the summary JSON.

    Args:
        args (argparse.Namespace): Parsed train flags

    Returns:
        int: 0 on success, 2 if the run diverged
    """
    out_dir = args.out or default_train_dir(args)
    config = make_run_config(
        alpha=args.alpha,
        model_name=args.model,
        variant=args.optimizer,
        steps=args.steps,
        seed=args.seed,
        p=args.p,
        encoding=args.encoding,
        eval_every=args.eval_every,
        acc_threshold=args.acc_threshold,
        init_scale=args.init_scale,
        weight_decay=args.weight_decay,
        lr=args.lr,
        use_layer_norm=not args.no_layer_norm,
        positional=args.positional,
        out_dir=out_dir,
    )
    rows, summary, params = run_training(config, progress=args.progress)
    save_run_outputs(out_dir, rows, summary, params, config)
    if args.dump_dataset:
        write_dataset_dump(split_dataset(config.task, config.alpha, config.data_seed), os.path.join(out_dir, "dataset.csv"))
    print(json.dumps(summary_to_dict(summary, Config.record_wall_time()), indent=2))
    return EXIT_DIVERGED if summary.diverged else EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    """
    Run a sweep file and write sweep.csv plus the resolved sweep_spec.json.

    Returns:
        int: 0 if at least one run succeeded, 1 otherwise
    """
    spec = SweepSpec.load(args.spec)
    out_dir = args.out or os.path.join(Config.get_output_root(), os.path.splitext(os.path.basename(args.spec))[0])
    os.makedirs(out_dir, exist_ok=True)
    rows = run_sweep(spec, out_dir, workers=args.workers)
    write_sweep_csv(rows, os.path.join(out_dir, "sweep.csv"))
    write_sweep_spec(spec, os.path.join(out_dir, "sweep_spec.json"))
    succeeded = sum(1 for row in rows if row["signature"] != "error")
    print(f"{succeeded}/{len(rows)} runs succeeded; wrote {os.path.join(out_dir, 'sweep.csv')}")
    return EXIT_OK if succeeded else EXIT_FAILURE


def cmd_report(args: argparse.Namespace) -> int:
    if not os.path.exists(args.sweep_csv):
        logger.error("No such file: %s", args.sweep_csv)
        return EXIT_FAILURE
    print(write_report(args.sweep_csv, out_path=args.out, max_steps=args.max_steps), end="")
    return EXIT_OK


def cmd_check(args: Optional[argparse.Namespace] = None) -> int:
    """
    Run the self-check suite and print one line per check.

    Returns:
        int: 0 if every check passed, 1 otherwise
    """
    results = run_checks()
    for result in results:
        print(f"PASS {result.name}" if result.passed else f"FAIL {result.name}: {result.detail}")
    passed = sum(1 for result in results if result.passed)
    print(f"{passed}/{len(results)} checks passed")
    return EXIT_OK if passed == len(results) else EXIT_FAILURE


COMMANDS = {"train": cmd_train, "sweep": cmd_sweep, "report": cmd_report, "check": cmd_check}


def run_command(argv: Optional[List[str]] = None) -> int:
    """
    Parse argv and run the chosen subcommand.

    Args:
        argv (list, optional): Arguments without the program name (default: sys.argv[1:])

    Returns:
        int: The exit status
    """
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (GrokLabError, OSError) as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_FAILURE
