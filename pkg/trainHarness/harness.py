"""
Training Harness

This module runs one training experiment end to end. It includes functions for:
1. Building a RunConfig from named presets (make_run_config)
2. Evaluating loss and accuracy on a set of examples with clean weights
3. Drawing full batches or per-epoch shuffled minibatches
4. The training loop itself (run_training), with divergence handling
5. Persisting a run (metrics.csv, summary.json, model.ckpt, config.json)

In full-batch mode one step is one epoch; the harness always counts steps.
"""

import dataclasses
import json
import logging
import math
import os
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from modelZoo.model_params import (
    MLPConfig,
    ModelConfig,
    ModelConfigError,
    ModelParams,
    TransformerConfig,
    config_to_dict,
    count_params,
    init_params,
    save_checkpoint,
)
from modelZoo.zoo import build_model_config, forward
from modularData.modular_data import ENCODINGS, DomainError, Example, ModTask, TokenVocab, encode_batch, split_dataset
from optimizerSuite.optimizers import NoiseStreams, OptimConfig, OptimState, apply_weight_noise, optimizer_step, warmup_lr
from optimizerSuite.variants import make_variant
from tensorEngine import ops
from tensorEngine.errors import ContractError, NumericError
from tensorEngine.tensor import Tape, Tensor, backward, no_grad
from trainHarness.config import Config
from trainHarness.metrics import (
    MetricRow,
    RunSummary,
    calculate_gap_ratio,
    detect_event,
    grokking_signature,
    summary_to_dict,
    write_metrics,
)

logger = logging.getLogger(__name__)

EVAL_CHUNK = 2048


@dataclass
class RunConfig:
    """Everything that determines one training run."""

    task: ModTask
    alpha: float
    data_seed: int
    init_seed: int
    noise_seed: int
    encoding: str
    model: ModelConfig
    optimizer: OptimConfig
    max_steps: int
    eval_every: int = 10
    acc_threshold: float = 0.99
    out_dir: Optional[str] = None
    model_name: str = "transformer-simplified"
    min_gap_ratio: float = 5.0
    vocab: Optional[TokenVocab] = None

    def validate(self) -> None:
        self.task.validate()
        if not 0 < self.alpha < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.encoding not in ENCODINGS:
            raise DomainError(f"Unknown encoding: {self.encoding}. Valid encodings are: {', '.join(ENCODINGS)}")
        if self.max_steps < 1:
            raise DomainError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.eval_every < 1:
            raise DomainError(f"eval_every must be >= 1, got {self.eval_every}")
        if not 0 < self.acc_threshold <= 1:
            raise DomainError(f"acc_threshold must lie in (0, 1], got {self.acc_threshold}")
        if isinstance(self.model, MLPConfig) and self.encoding != "simple":
            raise ModelConfigError("The MLP takes the simple encoding only")
        if isinstance(self.model, TransformerConfig) and self.model.seq_len != (3 if self.encoding == "simple" else 4):
            raise ModelConfigError(f"Transformer seq_len {self.model.seq_len} does not match the {self.encoding} encoding")
        self.model.validate()
        self.optimizer.validate()


def derive_seeds(seed: int) -> Tuple[int, int, int]:
    """(data_seed, init_seed, noise_seed) for a single user-facing seed."""
    return seed, seed + 1, seed + 2


def make_run_config(
    alpha: float,
    model_name: str,
    variant: str,
    steps: int,
    seed: int = 0,
    p: int = 97,
    encoding: str = "simple",
    eval_every: int = 10,
    acc_threshold: float = 0.99,
    init_scale: float = 1.0,
    weight_decay: Optional[float] = None,
    lr: Optional[float] = None,
    use_layer_norm: bool = True,
    positional: str = "learned",
    out_dir: Optional[str] = None,
    vocab: Optional[TokenVocab] = None,
) -> RunConfig:
    """
    Build a RunConfig from a model preset and an optimizer variant name.

    A weight_decay override is applied after the variant; on a plain Adam
    variant it switches the update to AdamW so the decay is decoupled. An lr
    override replaces the variant's peak learning rate.

    Args:
        alpha (float): Training data fraction
        model_name (str): Model preset name
        variant (str): Optimizer variant name
        steps (int): Number of optimizer steps
        seed (int): User seed; data, init and noise seeds are seed, seed + 1 and seed + 2

    Returns:
        RunConfig: The validated configuration
    """
    task = ModTask(p)
    task.validate()
    data_seed, init_seed, noise_seed = derive_seeds(seed)
    model = build_model_config(
        model_name, encoding, task, vocab,
        init_scale=init_scale, use_layer_norm=use_layer_norm, positional=positional,
    )
    optimizer = make_variant(variant, noise_seed=noise_seed)
    if weight_decay is not None:
        kind = "adamw" if optimizer.kind == "adam" and weight_decay > 0 else optimizer.kind
        optimizer = dataclasses.replace(optimizer, kind=kind, weight_decay=weight_decay)
    if lr is not None:
        optimizer = dataclasses.replace(optimizer, lr=lr)
    config = RunConfig(
        task=task,
        alpha=alpha,
        data_seed=data_seed,
        init_seed=init_seed,
        noise_seed=noise_seed,
        encoding=encoding,
        model=model,
        optimizer=optimizer,
        max_steps=steps,
        eval_every=eval_every,
        acc_threshold=acc_threshold,
        out_dir=out_dir,
        model_name=model_name,
        vocab=vocab,
    )
    config.validate()
    return config


def score_logits(logits: np.ndarray, targets: np.ndarray) -> Tuple[float, float]:
    """
    Mean cross-entropy and argmax accuracy of a logit matrix.

    Ties in the argmax go to the lowest class index.
    """
    loss = ops.cross_entropy(Tensor(logits), targets).item()
    accuracy = float(np.mean(np.argmax(logits, axis=1) == targets))
    return loss, accuracy


def evaluate_encoded(
    params: ModelParams,
    model: ModelConfig,
    ids: np.ndarray,
    targets: np.ndarray,
) -> Tuple[float, float]:
    """Loss and accuracy over already-encoded examples, in chunks, without recording."""
    if len(targets) == 0:
        raise ContractError("evaluate needs at least one example")
    total_loss, correct = 0.0, 0
    with no_grad():
        for start in range(0, len(targets), EVAL_CHUNK):
            chunk_targets = targets[start:start + EVAL_CHUNK]
            logits = forward(params, model, ids[start:start + EVAL_CHUNK]).values
            loss, _ = score_logits(logits, chunk_targets)
            total_loss += loss * len(chunk_targets)
            correct += int(np.sum(np.argmax(logits, axis=1) == chunk_targets))
    return total_loss / len(targets), correct / len(targets)


def evaluate(
    params: ModelParams,
    model: ModelConfig,
    examples: Sequence[Example],
    encoding: str,
    task: ModTask,
    vocab: Optional[TokenVocab] = None,
) -> Tuple[float, float]:
    """
    Evaluate a model on a list of examples.

    Args:
        params (ModelParams): Parameters (read only)
        model: The model configuration
        examples (list): Non-empty list of examples
        encoding (str): "simple" or "dictionary"
        task (ModTask): The task
        vocab (TokenVocab, optional): Dictionary vocabulary

    Returns:
        tuple: (mean cross-entropy loss, accuracy)

    Raises:
        ContractError: If the example list is empty
    """
    if not examples:
        raise ContractError("evaluate needs at least one example")
    ids, targets = encode_batch(examples, encoding, task, vocab)
    return evaluate_encoded(params, model, ids, targets)


class MinibatchSampler:
    """
    Index batches over the training set.

    batch_size 0 (or one at least the set size) returns the full set every step.
    Otherwise every epoch draws a
    fresh permutation and cuts it into consecutive batches; the final short
    batch of an epoch is kept.
    """

    def __init__(self, n_examples: int, batch_size: int, seed: int):
        self.n_examples = n_examples
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self._order = np.arange(n_examples)
        self._position = n_examples

    def next_batch(self) -> np.ndarray:
        if self.batch_size == 0 or self.batch_size >= self.n_examples:
            return self._order
        if self._position >= self.n_examples:
            self._order = self.rng.permutation(self.n_examples)
            self._position = 0
        batch = self._order[self._position:self._position + self.batch_size]
        self._position += self.batch_size
        return batch


def _training_step(
    params: ModelParams,
    state: OptimState,
    config: RunConfig,
    streams: NoiseStreams,
    ids: np.ndarray,
    targets: np.ndarray,
) -> Tuple[ModelParams, OptimState]:
    """One forward/backward/update; raises NumericError when the loss is not finite."""
    optimizer = config.optimizer
    if optimizer.weight_noise_std > 0:
        live = params.with_values(apply_weight_noise(params.value_arrays(), optimizer, streams.weight))
    else:
        live = params
    with Tape() as tape:
        loss = ops.cross_entropy(forward(live, config.model, ids), targets)
    if not math.isfinite(loss.item()):
        raise NumericError(f"training loss is {loss.item()}")
    backward(tape, loss, params=live.values())
    values, state = optimizer_step(params.value_arrays(), state, live.grad_arrays(), optimizer, streams.update)
    return params.with_values(values), state


def run_training(config: RunConfig, progress: bool = False) -> Tuple[List[MetricRow], RunSummary, ModelParams]:
    """
    Train one model and record its learning curves.

    Args:
        config (RunConfig): The run configuration
        progress (bool): Show a tqdm progress bar

    Returns:
        tuple: (metric rows, run summary, final parameters)

    Raises:
        DomainError: If the split leaves the train or validation set empty
    """
    config.validate()
    split = split_dataset(config.task, config.alpha, config.data_seed)
    if not split.train or not split.val:
        raise DomainError(
            f"alpha={config.alpha} with p={config.task.p} leaves an empty split "
            f"({len(split.train)} train / {len(split.val)} val)"
        )
    train_ids, train_targets = encode_batch(split.train, config.encoding, config.task, config.vocab)
    val_ids, val_targets = encode_batch(split.val, config.encoding, config.task, config.vocab)

    params = init_params(config.model, config.init_seed)
    state = OptimState.zeros(params.value_arrays())
    streams = NoiseStreams(config.noise_seed)
    sampler = MinibatchSampler(len(train_targets), config.optimizer.batch_size, config.data_seed)

    logger.info(
        "Starting run: %s, %s, alpha=%s, %d train / %d val, %d steps",
        config.model_name, config.optimizer.kind, config.alpha, len(train_targets), len(val_targets), config.max_steps,
    )
    rows: List[MetricRow] = []
    summary = RunSummary()
    started = time.perf_counter()
    steps = tqdm(range(1, config.max_steps + 1), desc="train", unit="step", disable=not progress)
    for t in steps:
        batch = sampler.next_batch()
        try:
            params, state = _training_step(params, state, config, streams, train_ids[batch], train_targets[batch])
            summary.steps_taken = t
            if t % config.eval_every == 0 or t == config.max_steps:
                train_loss, train_acc = evaluate_encoded(params, config.model, train_ids, train_targets)
                val_loss, val_acc = evaluate_encoded(params, config.model, val_ids, val_targets)
                if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
                    raise NumericError("evaluation loss is not finite")
                rows.append(MetricRow(t, train_loss, val_loss, train_acc, val_acc, warmup_lr(config.optimizer, t)))
                logger.debug("step %d: train %.4f/%.3f val %.4f/%.3f", t, train_loss, train_acc, val_loss, val_acc)
                if progress:
                    steps.set_postfix(train_acc=f"{train_acc:.3f}", val_acc=f"{val_acc:.3f}")
        except NumericError as e:
            summary.diverged = True
            summary.diverged_at_step = t
            logger.warning("Run diverged at step %d: %s", t, e)
            break

    summary.wall_time_seconds = time.perf_counter() - started
    summary.memorization_step = detect_event(rows, "train", config.acc_threshold)
    summary.generalization_step = detect_event(rows, "val", config.acc_threshold)
    summary.gap_ratio = calculate_gap_ratio(summary.memorization_step, summary.generalization_step)
    if rows:
        summary.final_train_acc = rows[-1].train_acc
        summary.final_val_acc = rows[-1].val_acc
    summary.signature = grokking_signature(summary, config.min_gap_ratio)
    logger.info(
        "Successfully finished run after %d steps: %s (memorization %s, generalization %s)",
        summary.steps_taken, summary.signature, summary.memorization_step, summary.generalization_step,
    )
    return rows, summary, params


def run_config_to_dict(config: RunConfig) -> Dict:
    """The config.json object of a run."""
    return {
        "task": {"p": config.task.p},
        "alpha": config.alpha,
        "data_seed": config.data_seed,
        "init_seed": config.init_seed,
        "noise_seed": config.noise_seed,
        "encoding": config.encoding,
        "model_name": config.model_name,
        "model": config_to_dict(config.model),
        "optimizer": dataclasses.asdict(config.optimizer),
        "max_steps": config.max_steps,
        "eval_every": config.eval_every,
        "acc_threshold": config.acc_threshold,
        "min_gap_ratio": config.min_gap_ratio,
        "vocab": json.loads(config.vocab.to_json()) if config.vocab is not None else None,
    }


def save_run_outputs(
    out_dir: str,
    rows: List[MetricRow],
    summary: RunSummary,
    params: ModelParams,
    config: RunConfig,
) -> Dict[str, str]:
    """
    Write metrics.csv, summary.json, model.ckpt and config.json into out_dir.

    Returns:
        dict: File role -> written path
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "metrics": os.path.join(out_dir, "metrics.csv"),
        "summary": os.path.join(out_dir, "summary.json"),
        "checkpoint": os.path.join(out_dir, "model.ckpt"),
        "config": os.path.join(out_dir, "config.json"),
    }
    write_metrics(rows, paths["metrics"])
    with open(paths["summary"], "w") as f:
        f.write(json.dumps(summary_to_dict(summary, Config.record_wall_time()), indent=2) + "\n")
    save_checkpoint(paths["checkpoint"], config.model, params)
    with open(paths["config"], "w") as f:
        f.write(json.dumps({
            **run_config_to_dict(config),
            "param_counts": {"total": count_params(params), "non_embedding": count_params(params, include_embeddings=False)},
        }, indent=2, sort_keys=True) + "\n")
    logger.info("Successfully wrote run outputs to %s", out_dir)
    return paths
