"""
Tests for sweeps, reports, the self-check suite and the command line

Sweeps run the MLP at p = 11 for a few steps so each grid cell finishes in
well under a second.
"""

import json
import logging
import os
import sys

import numpy as np
import pandas as pd
import pytest

# Add the parent directory to the path so we can import the experimentSweeps package
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from experimentSweeps import checks
from experimentSweeps.commands import build_parser, run_command
from experimentSweeps.helper_functions import format_cell, format_steps, run_dir_name
from experimentSweeps.report import ReportError, build_report, load_sweep, write_report
from experimentSweeps.sweep import SweepSpec, SweepSpecError, cell_config, resolve_workers, run_sweep, write_sweep_csv
from groklab import main
from tensorEngine import ops
from trainHarness.config import Config
from trainHarness.harness import run_training

QUICK_BASE = {"model": "mlp", "p": 11, "steps": 20, "eval_every": 10}
SWEEPS_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "sweeps")

slow = pytest.mark.skipif(not Config.run_slow_tests(), reason="set GROKLAB_RUN_SLOW=1 to run training reproductions")


@pytest.fixture(autouse=True)
def restore_root_logging():
    # main() reconfigures the root logger onto the captured stderr of one test
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def quick_spec(**overrides):
    fields = dict(base=dict(QUICK_BASE), alphas=[0.3, 0.6], variants=["adamw-wd1", "adam-baseline"], seeds=[0])
    fields.update(overrides)
    return SweepSpec.from_dict(fields)


def sweep_row(alpha, variant, seed, generalization_step, final_val_acc=0.5, signature="memorized-only"):
    return {
        "alpha": alpha,
        "variant": variant,
        "seed": seed,
        "memorization_step": 50,
        "generalization_step": generalization_step,
        "gap_ratio": None if generalization_step is None else generalization_step / 50,
        "signature": signature,
        "final_val_acc": final_val_acc,
    }


def test_helper_formatting():
    assert format_cell(None) == ""
    assert format_cell(0.3) == "0.3"
    assert format_cell(True) == "True"
    assert format_steps(200.0, 1800) == "200"
    assert format_steps(float("inf"), 1800) == ">1800"
    assert format_steps(float("inf"), None) == ">max_steps"
    assert run_dir_name(0.3, "adamw-wd1", 2) == "alpha0.3_adamw-wd1_seed2"


def test_sweep_spec_validation():
    with pytest.raises(SweepSpecError):
        quick_spec(alphas=[])
    with pytest.raises(SweepSpecError):
        quick_spec(alphas=[1.0])
    with pytest.raises(SweepSpecError):
        quick_spec(variants=["adam-lr-10x"])
    with pytest.raises(SweepSpecError):
        quick_spec(seeds=[])
    with pytest.raises(SweepSpecError):
        quick_spec(base={"optimizer": "sgd"})
    with pytest.raises(SweepSpecError):
        SweepSpec.from_dict({"alphas": [0.3]})


def test_worker_resolution(monkeypatch):
    spec = quick_spec(parallel_workers=3)
    monkeypatch.delenv("GROKLAB_WORKERS", raising=False)
    assert resolve_workers(spec) == 3
    monkeypatch.setenv("GROKLAB_WORKERS", "2")
    assert resolve_workers(spec) == 2
    assert resolve_workers(spec, workers=1) == 1


def test_sweep_row_count_and_order(tmp_path):
    rows = run_sweep(quick_spec(seeds=[1, 0]), str(tmp_path), workers=1)
    assert len(rows) == 2 * 2 * 2
    assert [(row["alpha"], row["variant"], row["seed"]) for row in rows] == sorted(
        (alpha, variant, seed) for alpha in (0.3, 0.6) for variant in ("adam-baseline", "adamw-wd1") for seed in (0, 1)
    )
    assert all(row["signature"] != "error" for row in rows)
    assert os.path.exists(tmp_path / "alpha0.3_adamw-wd1_seed1" / "metrics.csv")


def test_sweep_errors_become_rows(tmp_path):
    # alpha 0.005 at p = 11 leaves no training examples
    rows = run_sweep(quick_spec(alphas=[0.005, 0.5], variants=["adam-baseline"]), str(tmp_path), workers=1)
    assert len(rows) == 2
    assert rows[0]["signature"] == "error" and "empty split" in rows[0]["error"]
    assert rows[1]["signature"] != "error"


def test_sweep_base_lr_reaches_every_run(tmp_path):
    rows = run_sweep(quick_spec(base={**QUICK_BASE, "lr": 0.01}, alphas=[0.5]), str(tmp_path), workers=1)
    assert all(row["signature"] != "error" for row in rows)
    for variant, kind in (("adam-baseline", "adam"), ("adamw-wd1", "adamw")):
        config = json.loads((tmp_path / f"alpha0.5_{variant}_seed0" / "config.json").read_text())
        assert config["optimizer"]["lr"] == 0.01 and config["optimizer"]["kind"] == kind


def test_model_contrast_sweep_files():
    mlp = SweepSpec.load(os.path.join(SWEEPS_DIR, "model_contrast.json"))
    config = cell_config(mlp.resolved_base, 0.45, mlp.variants[0], 0)
    assert config.model_name == "mlp" and config.max_steps == 20000
    assert config.optimizer.kind == "adam" and config.optimizer.lr == 1e-3
    assert config.optimizer.weight_decay == 0.0 and config.optimizer.l2_coeff == 0.0
    assert config.model.init_scale == 1.0
    assert 0.45 in mlp.alphas

    lstm = SweepSpec.load(os.path.join(SWEEPS_DIR, "model_contrast_lstm.json"))
    config = cell_config(lstm.resolved_base, 0.45, lstm.variants[0], 0)
    assert config.model_name == "lstm" and config.model.hidden == 20
    assert config.optimizer.kind == "adam" and config.optimizer.lr == 0.01
    assert config.optimizer.weight_decay == 0.0


def test_checked_in_sweep_files_load():
    for name in sorted(os.listdir(SWEEPS_DIR)):
        spec = SweepSpec.load(os.path.join(SWEEPS_DIR, name))
        for job in spec.cells():
            cell_config(spec.resolved_base, job["alpha"], job["variant"], job["seed"])


def test_serial_and_parallel_sweeps_are_identical(tmp_path, monkeypatch):
    monkeypatch.delenv("GROKLAB_RECORD_WALL_TIME", raising=False)
    spec = quick_spec()
    serial = run_sweep(spec, str(tmp_path / "serial"), workers=1)
    parallel = run_sweep(spec, str(tmp_path / "parallel"), workers=2)
    write_sweep_csv(serial, str(tmp_path / "serial.csv"))
    write_sweep_csv(parallel, str(tmp_path / "parallel.csv"))
    assert (tmp_path / "serial.csv").read_bytes() == (tmp_path / "parallel.csv").read_bytes()
    cell = "alpha0.6_adam-baseline_seed0"
    assert (tmp_path / "serial" / cell / "summary.json").read_bytes() == (tmp_path / "parallel" / cell / "summary.json").read_bytes()


def test_report_median_and_absent_steps(tmp_path):
    rows = [
        sweep_row(0.3, "adamw-wd1", 0, 100, signature="grokked"),
        sweep_row(0.3, "adamw-wd1", 1, 400, signature="grokked"),
        sweep_row(0.3, "adamw-wd1", 2, 200, signature="grokked"),
        sweep_row(0.3, "adam-baseline", 0, None),
        sweep_row(0.3, "adam-baseline", 1, None),
        sweep_row(0.3, "adam-baseline", 2, 300),
        sweep_row(0.5, "adamw-wd1", 0, 90, final_val_acc=1.0, signature="generalized-without-gap"),
    ]
    path = tmp_path / "sweep.csv"
    write_sweep_csv(rows, str(path))
    tables = build_report(load_sweep(str(path)), max_steps=1800)
    steps = tables["steps_until_generalization"]
    assert steps.at[0.3, "adamw-wd1"] == "200"
    assert steps.at[0.3, "adam-baseline"] == ">1800"
    assert steps.at[0.5, "adamw-wd1"] == "90"
    assert steps.at[0.5, "adam-baseline"] == ""
    assert tables["final_val_acc"].at[0.5, "adamw-wd1"] == "1.0000"


def test_report_skips_error_rows_and_rejects_empty(tmp_path):
    path = tmp_path / "sweep.csv"
    write_sweep_csv([], str(path))
    with pytest.raises(ReportError):
        load_sweep(str(path))
    write_sweep_csv([{"alpha": 0.3, "variant": "adamw-wd1", "seed": 0, "signature": "error"}], str(path))
    with pytest.raises(ReportError):
        load_sweep(str(path))
    write_sweep_csv([sweep_row(0.3, "adamw-wd1", 0, 120), {"alpha": 0.3, "variant": "adamw-wd1", "seed": 1, "signature": "error"}], str(path))
    assert len(load_sweep(str(path))) == 1


def test_write_report_single_row(tmp_path):
    path = tmp_path / "sweep.csv"
    write_sweep_csv([sweep_row(0.3, "adamw-wd1", 0, None)], str(path))
    (tmp_path / "sweep_spec.json").write_text(json.dumps({"base": {"steps": 2500}}))
    text = write_report(str(path))
    assert ">2500" in text and "0.5000" in text
    report = pd.read_csv(tmp_path / "report.csv", dtype=str)
    assert list(report.columns) == ["table", "alpha", "variant", "value"]
    assert report.values.tolist() == [
        ["steps_until_generalization", "0.3", "adamw-wd1", ">2500"],
        ["final_val_acc", "0.3", "adamw-wd1", "0.5000"],
    ]


def test_report_without_budget_uses_placeholder(tmp_path):
    path = tmp_path / "sweep.csv"
    write_sweep_csv([sweep_row(0.3, "adamw-wd1", 0, None)], str(path))
    assert ">max_steps" in write_report(str(path))


def test_check_suite_passes_on_a_fresh_build():
    results = checks.run_checks()
    assert len(results) >= 12
    failed = [f"{result.name}: {result.detail}" for result in results if not result.passed]
    assert not failed


def test_corrupted_relu_backward_fails_the_relu_check(monkeypatch):
    monkeypatch.setattr(ops, "_relu_grad_mask", lambda values: (values < 0).astype(np.float64))
    passed, detail = checks.check_relu()
    assert not passed
    results = {result.name: result for result in checks.run_checks()}
    assert not results["grad:relu"].passed
    assert results["grad:sigmoid"].passed


def test_optimizer_oracles_reject_tiny_drift(monkeypatch):
    run_scalar = checks._run_scalar
    assert checks.check_adam_oracle()[0] and checks.check_adamw_oracle()[0] and checks.check_decoupled_decay()[0]
    monkeypatch.setattr(checks, "_run_scalar", lambda config, theta, grads: run_scalar(config, theta, grads) + 1e-13)
    assert not checks.check_adam_oracle()[0]
    assert not checks.check_adamw_oracle()[0]
    passed, detail = checks.check_decoupled_decay()
    assert not passed and "oracle" in detail


def test_cli_missing_alpha_exits_one(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["train", "--steps", "1"])
    assert excinfo.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_cli_rejects_unknown_variant():
    with pytest.raises(SystemExit) as excinfo:
        build_parser().parse_args(["train", "--alpha", "0.3", "--optimizer", "adam-lr-10x"])
    assert excinfo.value.code == 1


def test_cli_train_single_step(tmp_path, capsys):
    out = tmp_path / "run"
    status = main(["train", "--p", "11", "--alpha", "0.5", "--model", "mlp", "--optimizer", "adam-baseline",
                   "--steps", "1", "--out", str(out), "--dump-dataset"])
    assert status == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["memorization_step"] is None and summary["generalization_step"] is None
    assert "signature" in summary
    for name in ("metrics.csv", "summary.json", "model.ckpt", "config.json", "dataset.csv"):
        assert (out / name).exists()


def test_cli_train_lr_flag(tmp_path, capsys):
    out = tmp_path / "run"
    status = main(["train", "--p", "11", "--alpha", "0.5", "--model", "lstm", "--optimizer", "adam-baseline",
                   "--lr", "0.01", "--steps", "1", "--out", str(out)])
    assert status == 0
    capsys.readouterr()
    optimizer = json.loads((out / "config.json").read_text())["optimizer"]
    assert optimizer["kind"] == "adam" and optimizer["lr"] == 0.01


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cli_train_divergence_exits_two(tmp_path, capsys):
    # weights of order 1e200 overflow the first matmul
    status = run_command(["train", "--p", "11", "--alpha", "0.5", "--model", "mlp", "--optimizer", "adam-baseline",
                          "--init-scale", "1e200", "--steps", "3", "--out", str(tmp_path / "run")])
    assert status == 2
    assert json.loads(capsys.readouterr().out)["diverged"] is True


def test_cli_sweep_and_report(tmp_path, capsys):
    spec_path = tmp_path / "grid.json"
    spec_path.write_text(json.dumps({"base": QUICK_BASE, "alphas": [0.3, 0.6], "variants": ["adamw-wd1"], "seeds": [0], "parallel_workers": 1}))
    out = tmp_path / "grid"
    assert main(["sweep", str(spec_path), "--out", str(out)]) == 0
    assert "2/2 runs succeeded" in capsys.readouterr().out
    spec = json.loads((out / "sweep_spec.json").read_text())
    assert spec["base"]["encoding"] == "simple"

    assert main(["report", str(out / "sweep.csv")]) == 0
    text = capsys.readouterr().out
    assert "Steps until generalization" in text and "Final validation accuracy" in text
    assert (out / "report.csv").exists()


def test_cli_report_errors(tmp_path):
    assert main(["report", str(tmp_path / "missing.csv")]) == 1
    empty = tmp_path / "sweep.csv"
    write_sweep_csv([], str(empty))
    assert main(["report", str(empty)]) == 1


def test_cli_check(capsys):
    assert main(["check"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[-1] == f"{len(checks.CHECKS)}/{len(checks.CHECKS)} checks passed"
    assert all(line.startswith("PASS ") for line in lines[:-1])


@pytest.mark.slow
@slow
def test_mlp_contrast_does_not_grok():
    spec = SweepSpec.load(os.path.join(SWEEPS_DIR, "model_contrast.json"))
    base = spec.resolved_base
    rows, summary, _ = run_training(cell_config(base, 0.45, "adam-baseline", 0))
    assert summary.signature != "grokked"
    final_quartile = [row.val_loss for row in rows if row.step > 0.75 * base["steps"]]
    assert max(final_quartile) >= 1.05 * min(row.val_loss for row in rows)


@pytest.mark.slow
@slow
def test_optimizer_grid_ordering(tmp_path):
    spec = SweepSpec.load(os.path.join(SWEEPS_DIR, "optimizer_grid.json"))
    rows = run_sweep(spec, str(tmp_path), workers=resolve_workers(spec))
    assert len(rows) == 3 * 8
    assert all(row["signature"] != "error" for row in rows)
    for row in rows:
        summary = json.loads((tmp_path / run_dir_name(row["alpha"], row["variant"], row["seed"]) / "summary.json").read_text())
        if not summary["diverged"]:
            assert row["memorization_step"] is not None and row["memorization_step"] <= 1000
    at_half = {row["variant"]: row["final_val_acc"] for row in rows if row["alpha"] == 0.5}
    assert at_half["adamw-wd1"] == max(at_half.values())
