"""
Self-Check Suite

This module runs the numerical self-checks behind the `check` command:
1. Finite-difference gradient checks for every differentiable op
2. End-to-end gradient checks of the three model families at toy sizes (p = 7)
3. Scalar oracles for Adam and AdamW, decoupled decay and the SGD L2/decay equivalence
4. Dataset invariants: split partitions, labels and the encode/decode round trip

Every check returns a CheckResult; a check that raises counts as failed.
"""

import logging
import math
from fractions import Fraction
from typing import Callable, Dict, List, NamedTuple, Tuple

import numpy as np

from modelZoo.model_params import LSTMConfig, MLPConfig, TransformerConfig, init_params
from modelZoo.zoo import forward
from modularData.modular_data import (
    ModTask,
    TokenVocab,
    decode_dictionary,
    decode_simple,
    encode_batch,
    encode_dictionary,
    encode_simple,
    enumerate_pairs,
    split_dataset,
)
from optimizerSuite.optimizers import OptimConfig, OptimState, optimizer_step, sgd_step
from tensorEngine import ops
from tensorEngine.gradient_check import finite_diff_check, finite_diff_check_params
from tensorEngine.tensor import Tensor

logger = logging.getLogger(__name__)

OP_TOLERANCE = 1e-4
MODEL_TOLERANCE = 1e-4
MODEL_STEP = 1e-5
ORACLE_TOLERANCE = 1e-15
DECOUPLING_GAP = 1e-12
SGD_COEFFS = (0.01, 0.1, 1.0)
TOY_P = 7


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


CheckFn = Callable[[], Tuple[bool, str]]


def _uniform(rng: np.random.Generator, shape, gap: float = 0.0) -> np.ndarray:
    """Draws in [-2, 2]; with gap > 0, values closer than gap to zero are pushed out."""
    values = rng.uniform(-2.0, 2.0, size=shape)
    if gap > 0:
        values[np.abs(values) < gap] = gap
    return values


def _op_check(f: Callable[[Tensor], Tensor], x: np.ndarray) -> Tuple[bool, str]:
    error = finite_diff_check(f, Tensor(x), h=1e-4)
    return error < OP_TOLERANCE, f"max relative error {error:.3e}"


def _weighted(op: Callable[[Tensor], Tensor], weights: np.ndarray) -> Callable[[Tensor], Tensor]:
    """Scalar loss sum(weights * op(x)), so every output coordinate gets its own weight."""
    w = Tensor(weights)
    return lambda x: ops.sum_all(ops.mul(op(x), w))


# Op checks


def check_matmul() -> Tuple[bool, str]:
    rng = np.random.default_rng(0)
    b = Tensor(_uniform(rng, (4, 5)))
    return _op_check(_weighted(lambda x: ops.matmul(x, b), _uniform(rng, (3, 5))), _uniform(rng, (3, 4)))


def check_batched_matmul() -> Tuple[bool, str]:
    rng = np.random.default_rng(1)
    b = Tensor(_uniform(rng, (2, 4, 3)))
    return _op_check(_weighted(lambda x: ops.batched_matmul(x, b), _uniform(rng, (2, 3, 3))), _uniform(rng, (2, 3, 4)))


def check_add() -> Tuple[bool, str]:
    rng = np.random.default_rng(2)
    b = Tensor(_uniform(rng, (4,)))
    return _op_check(lambda x: ops.sum_all(ops.tanh(ops.add(x, b))), _uniform(rng, (3, 4)))


def check_mul() -> Tuple[bool, str]:
    rng = np.random.default_rng(3)
    b = Tensor(_uniform(rng, (3, 4)))
    return _op_check(lambda x: ops.sum_all(ops.mul(ops.mul(x, b), x)), _uniform(rng, (3, 4)))


def check_relu() -> Tuple[bool, str]:
    rng = np.random.default_rng(4)
    return _op_check(_weighted(ops.relu, _uniform(rng, (4, 5))), _uniform(rng, (4, 5), gap=1e-3))


def check_sigmoid() -> Tuple[bool, str]:
    rng = np.random.default_rng(5)
    return _op_check(_weighted(ops.sigmoid, _uniform(rng, (4, 5))), _uniform(rng, (4, 5)))


def check_tanh() -> Tuple[bool, str]:
    rng = np.random.default_rng(6)
    return _op_check(_weighted(ops.tanh, _uniform(rng, (4, 5))), _uniform(rng, (4, 5)))


def check_softmax() -> Tuple[bool, str]:
    rng = np.random.default_rng(7)
    return _op_check(_weighted(ops.softmax, _uniform(rng, (3, 6))), _uniform(rng, (3, 6)))


def check_cross_entropy() -> Tuple[bool, str]:
    rng = np.random.default_rng(8)
    labels = rng.integers(0, 6, size=4)
    return _op_check(lambda x: ops.cross_entropy(x, labels), _uniform(rng, (4, 6)))


def check_embedding_lookup() -> Tuple[bool, str]:
    rng = np.random.default_rng(9)
    ids = np.array([[0, 3, 3], [5, 1, 0]])
    return _op_check(_weighted(lambda table: ops.embedding_lookup(table, ids), _uniform(rng, (2, 3, 4))), _uniform(rng, (6, 4)))


def check_layer_norm() -> Tuple[bool, str]:
    rng = np.random.default_rng(10)
    x, gain, bias = _uniform(rng, (3, 5)), _uniform(rng, (5,)), _uniform(rng, (5,))
    weights = _uniform(rng, (3, 5))
    checks = {
        "x": _op_check(_weighted(lambda t: ops.layer_norm(t, Tensor(gain), Tensor(bias)), weights), x),
        "gain": _op_check(_weighted(lambda t: ops.layer_norm(Tensor(x), t, Tensor(bias)), weights), gain),
        "bias": _op_check(_weighted(lambda t: ops.layer_norm(Tensor(x), Tensor(gain), t), weights), bias),
    }
    failed = [name for name, (passed, _) in checks.items() if not passed]
    return not failed, "; ".join(f"{name}: {detail}" for name, (_, detail) in checks.items())


# Model checks


def _model_check(config, encoding: str, seed: int) -> Tuple[bool, str]:
    examples = enumerate_pairs(TOY_P)
    picks = np.random.default_rng(seed).choice(len(examples), size=6, replace=False)
    ids, targets = encode_batch([examples[i] for i in picks], encoding, ModTask(TOY_P))
    error, path = finite_diff_check_params(
        lambda params: ops.cross_entropy(forward(params, config, ids), targets),
        init_params(config, seed),
        h=MODEL_STEP,
    )
    return error < MODEL_TOLERANCE, f"max relative error {error:.3e} at {path}"


def check_transformer() -> Tuple[bool, str]:
    config = TransformerConfig(n_layers=2, d_model=8, n_heads=2, head_dim=4, ffn_hidden=16, vocab_size=TOY_P + 1, seq_len=3, n_classes=TOY_P)
    return _model_check(config, "simple", seed=1)


def check_mlp() -> Tuple[bool, str]:
    config = MLPConfig(hidden=16, embed_dim=4, vocab_size=TOY_P + 1, n_classes=TOY_P)
    return _model_check(config, "simple", seed=2)


def check_lstm() -> Tuple[bool, str]:
    config = LSTMConfig(hidden=3, embed_dim=4, vocab_size=TOY_P + 2, n_classes=TOY_P + 2)
    return _model_check(config, "dictionary", seed=3)


# Optimizer checks


def _scalar_adam(theta: float, grads: List[float], lr: float, l2: float = 0.0, decay: float = 0.0) -> float:
    beta1, beta2, eps = 0.9, 0.98, 1e-8
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        g = g + l2 * theta
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps) - lr * decay * theta
    return theta


def _run_scalar(config: OptimConfig, theta: float, grads: List[float]) -> float:
    params: Dict[str, np.ndarray] = {"theta": np.array([theta])}
    state = OptimState.zeros(params)
    for g in grads:
        params, state = optimizer_step(params, state, {"theta": np.array([g])}, config)
    return float(params["theta"][0])


def check_adam_oracle() -> Tuple[bool, str]:
    grads = [4.0, -1.5, 0.25, 2.0, -0.7]
    got = _run_scalar(OptimConfig(kind="adam", lr=1e-3, warmup_steps=0), 0.3, grads)
    expected = _scalar_adam(0.3, grads, 1e-3)
    return abs(got - expected) <= ORACLE_TOLERANCE, f"got {got!r}, expected {expected!r}"


def check_adamw_oracle() -> Tuple[bool, str]:
    grads = [1.0, 0.5, -2.0, 0.0]
    got = _run_scalar(OptimConfig(kind="adamw", lr=1e-3, warmup_steps=0, weight_decay=1.0), 1.0, grads)
    expected = _scalar_adam(1.0, grads, 1e-3, decay=1.0)
    return abs(got - expected) <= ORACLE_TOLERANCE, f"got {got!r}, expected {expected!r}"


def check_decoupled_decay() -> Tuple[bool, str]:
    grads = [1.0, 1.0, 1.0]
    coupled = _run_scalar(OptimConfig(kind="adam", warmup_steps=0, l2_coeff=1.0), 1.0, grads)
    decoupled = _run_scalar(OptimConfig(kind="adamw", warmup_steps=0, weight_decay=1.0), 1.0, grads)
    detail = f"coupled {coupled!r}, decoupled {decoupled!r}"
    if abs(coupled - _scalar_adam(1.0, grads, 1e-3, l2=1.0)) > ORACLE_TOLERANCE:
        return False, f"coupled trajectory off its oracle: {detail}"
    if abs(decoupled - _scalar_adam(1.0, grads, 1e-3, decay=1.0)) > ORACLE_TOLERANCE:
        return False, f"decoupled trajectory off its oracle: {detail}"
    return abs(coupled - decoupled) > DECOUPLING_GAP, detail


def check_sgd_l2_equivalence() -> Tuple[bool, str]:
    rng = np.random.default_rng(11)
    for lam in SGD_COEFFS:
        with_l2 = OptimConfig(kind="sgd", lr=0.05, l2_coeff=lam)
        with_decay = OptimConfig(kind="sgd", lr=0.05, weight_decay=lam)
        for trial in range(10):
            start = {"a": rng.normal(size=(4, 3)), "b": rng.normal(size=(5,))}
            first, second = dict(start), dict(start)
            for t in range(1, 51):
                grads = {path: rng.normal(size=values.shape) for path, values in start.items()}
                first, second = sgd_step(first, grads, with_l2, t), sgd_step(second, grads, with_decay, t)
            for path in start:
                if not np.array_equal(first[path], second[path]):
                    return False, f"lambda {lam}, trial {trial}: {path} differs"
    return True, f"{10 * len(SGD_COEFFS)} 50-step trajectories bit-identical"


# Dataset checks


def check_split_partition() -> Tuple[bool, str]:
    for p in (2, 3, 5, 7, 13):
        universe = set(enumerate_pairs(p))
        for alpha in (0.1, 0.3, 0.5, 0.9):
            for seed in (0, 1):
                split = split_dataset(ModTask(p), alpha, seed)
                train, val = set(split.train), set(split.val)
                if train & val or train | val != universe or len(split.train) != math.floor(Fraction(str(alpha)) * p * p):
                    return False, f"p={p} alpha={alpha} seed={seed}"
    split = split_dataset(ModTask(97), 0.3, 0)
    if (len(split.train), len(split.val)) != (2822, 6587):
        return False, f"p=97 alpha=0.3 gave {len(split.train)}/{len(split.val)}"
    return True, "exhaustive for p <= 13, sizes at p = 97"


def check_labels() -> Tuple[bool, str]:
    for p in (2, 5, 13, 97):
        bad = [ex for ex in enumerate_pairs(p) if ex.label != (ex.x + ex.y) % p]
        if bad:
            return False, f"p={p}: {bad[0]}"
    return True, "labels equal (x + y) mod p"


def check_encode_round_trip() -> Tuple[bool, str]:
    for p in (5, 13):
        task, vocab = ModTask(p), TokenVocab.default(p)
        for ex in enumerate_pairs(p):
            if decode_simple(*encode_simple(ex, task), task) != ex:
                return False, f"simple encoding of {ex}"
            if decode_dictionary(*encode_dictionary(ex, vocab), vocab) != ex:
                return False, f"dictionary encoding of {ex}"
    return True, "simple and dictionary encodings decode back"


CHECKS: Dict[str, CheckFn] = {
    "grad:matmul": check_matmul,
    "grad:batched_matmul": check_batched_matmul,
    "grad:add": check_add,
    "grad:mul": check_mul,
    "grad:relu": check_relu,
    "grad:sigmoid": check_sigmoid,
    "grad:tanh": check_tanh,
    "grad:softmax": check_softmax,
    "grad:cross_entropy": check_cross_entropy,
    "grad:embedding_lookup": check_embedding_lookup,
    "grad:layer_norm": check_layer_norm,
    "grad:model:transformer": check_transformer,
    "grad:model:mlp": check_mlp,
    "grad:model:lstm": check_lstm,
    "optim:adam_oracle": check_adam_oracle,
    "optim:adamw_oracle": check_adamw_oracle,
    "optim:decoupled_decay": check_decoupled_decay,
    "optim:sgd_l2_equivalence": check_sgd_l2_equivalence,
    "data:split_partition": check_split_partition,
    "data:labels": check_labels,
    "data:encode_round_trip": check_encode_round_trip,
}


def run_checks() -> List[CheckResult]:
    """Run every check in CHECKS order."""
    results = []
    for name, check in CHECKS.items():
        try:
            passed, detail = check()
        except Exception as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        logger.debug("Check %s: %s (%s)", name, "pass" if passed else "fail", detail)
        results.append(CheckResult(name, passed, detail))
    return results
