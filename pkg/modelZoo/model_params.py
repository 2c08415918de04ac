"""
Model Configurations and Parameters

This module defines the architecture configurations of the model zoo and the
parameter collection they share. It includes:
1. TransformerConfig, MLPConfig and LSTMConfig
2. ModelParams - named parameter tensors iterated in sorted path order
3. init_params - seeded initialization from N(0, init_scale^2 / fan_in)
4. count_params - parameter counts with or without embedding tables
5. save_checkpoint / load_checkpoint - the single-file checkpoint format
"""

import base64
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass
from typing import ClassVar, Dict, Iterator, Mapping, NamedTuple, Tuple, Union

import numpy as np

from modelZoo.helper_functions import draw_normal
from tensorEngine.errors import GrokLabError
from tensorEngine.tensor import Tensor

logger = logging.getLogger(__name__)

# Token-embedding and unembedding tables; excluded from non-embedding counts.
EMBEDDING_PATHS = frozenset({"embed", "unembed"})
POSITIONAL_KINDS = ("learned", "sinusoidal")


class ModelConfigError(GrokLabError, ValueError):
    """Raised when an architecture configuration is inconsistent."""


class ParamSpec(NamedTuple):
    """Shape and initialization rule of one parameter."""

    shape: Tuple[int, ...]
    kind: str  # "weight", "embedding", "bias" or "gain"
    fan_in: int = 1


@dataclass(frozen=True)
class TransformerConfig:
    """Decoder-only transformer with causal attention (defaults: the 2-layer, width-128 model)."""

    arch: ClassVar[str] = "transformer"

    n_layers: int = 2
    d_model: int = 128
    n_heads: int = 4
    head_dim: int = 32
    ffn_hidden: int = 512
    vocab_size: int = 98
    seq_len: int = 3
    n_classes: int = 97
    use_layer_norm: bool = True
    positional: str = "learned"
    init_scale: float = 1.0
    layer_norm_eps: float = 1e-5

    def validate(self) -> None:
        if self.n_heads * self.head_dim != self.d_model:
            raise ModelConfigError(f"n_heads * head_dim must equal d_model ({self.n_heads} * {self.head_dim} != {self.d_model})")
        if self.seq_len not in (3, 4):
            raise ModelConfigError(f"seq_len must be 3 (simple encoding) or 4 (dictionary encoding), got {self.seq_len}")
        if self.positional not in POSITIONAL_KINDS:
            raise ModelConfigError(f"positional must be one of {', '.join(POSITIONAL_KINDS)}, got {self.positional}")
        if self.positional == "sinusoidal" and self.d_model % 2:
            raise ModelConfigError("sinusoidal positions need an even d_model")
        _check_positive(self, ("n_layers", "d_model", "n_heads", "head_dim", "ffn_hidden", "vocab_size", "n_classes"))
        _check_scale(self.init_scale)


@dataclass(frozen=True)
class MLPConfig:
    """Feed-forward network over concatenated token embeddings; n_layers counts linear layers."""

    arch: ClassVar[str] = "mlp"

    hidden: int = 512
    n_layers: int = 2
    activation: str = "relu"
    vocab_size: int = 98
    embed_dim: int = 128
    init_scale: float = 1.0
    n_classes: int = 97
    n_tokens: int = 3

    def validate(self) -> None:
        if self.activation != "relu":
            raise ModelConfigError(f"Only the relu activation is supported, got {self.activation}")
        if self.n_tokens != 3:
            raise ModelConfigError("The MLP takes the 3-token simple encoding")
        _check_positive(self, ("hidden", "n_layers", "vocab_size", "embed_dim", "n_classes"))
        _check_scale(self.init_scale)


@dataclass(frozen=True)
class LSTMConfig:
    """Single LSTM cell unrolled over the input tokens, with a linear read-out head."""

    arch: ClassVar[str] = "lstm"

    hidden: int = 20
    vocab_size: int = 98
    embed_dim: int = 128
    init_scale: float = 1.0
    n_classes: int = 97

    def validate(self) -> None:
        _check_positive(self, ("hidden", "vocab_size", "embed_dim", "n_classes"))
        _check_scale(self.init_scale)


ModelConfig = Union[TransformerConfig, MLPConfig, LSTMConfig]
CONFIG_TYPES = {cls.arch: cls for cls in (TransformerConfig, MLPConfig, LSTMConfig)}


def _check_positive(config, names) -> None:
    for name in names:
        if getattr(config, name) < 1:
            raise ModelConfigError(f"{type(config).__name__}.{name} must be >= 1, got {getattr(config, name)}")


def _check_scale(init_scale: float) -> None:
    if init_scale < 0:
        raise ModelConfigError(f"init_scale must be >= 0, got {init_scale}")


def config_to_dict(config: ModelConfig) -> Dict:
    return {"arch": config.arch, **dataclasses.asdict(config)}


def config_from_dict(data: Mapping) -> ModelConfig:
    """Rebuild a config from config_to_dict output."""
    fields = dict(data)
    arch = fields.pop("arch", None)
    if arch not in CONFIG_TYPES:
        raise ModelConfigError(f"Unknown architecture: {arch}. Valid architectures are: {', '.join(CONFIG_TYPES)}")
    return CONFIG_TYPES[arch](**fields)


def param_specs(config: ModelConfig) -> Dict[str, ParamSpec]:
    """
    List every parameter of an architecture.

    Args:
        config: A model configuration

    Returns:
        dict: Parameter path -> ParamSpec
    """
    if isinstance(config, TransformerConfig):
        return _transformer_specs(config)
    if isinstance(config, MLPConfig):
        return _mlp_specs(config)
    if isinstance(config, LSTMConfig):
        return _lstm_specs(config)
    raise ModelConfigError(f"Unsupported configuration type: {type(config).__name__}")


def _transformer_specs(config: TransformerConfig) -> Dict[str, ParamSpec]:
    d, ffn = config.d_model, config.ffn_hidden
    specs = {
        "embed": ParamSpec((config.vocab_size, d), "embedding"),
        "unembed": ParamSpec((d, config.n_classes), "weight", d),
    }
    if config.positional == "learned":
        specs["pos_embed"] = ParamSpec((config.seq_len, d), "embedding")
    norms = ["ln_final"]
    for i in range(config.n_layers):
        prefix = f"layer{i}"
        for name in ("wq", "wk", "wv", "wo"):
            specs[f"{prefix}.attn.{name}"] = ParamSpec((d, d), "weight", d)
        specs[f"{prefix}.ffn.w1"] = ParamSpec((d, ffn), "weight", d)
        specs[f"{prefix}.ffn.b1"] = ParamSpec((ffn,), "bias")
        specs[f"{prefix}.ffn.w2"] = ParamSpec((ffn, d), "weight", ffn)
        specs[f"{prefix}.ffn.b2"] = ParamSpec((d,), "bias")
        norms += [f"{prefix}.ln1", f"{prefix}.ln2"]
    if config.use_layer_norm:
        for norm in norms:
            specs[f"{norm}.gain"] = ParamSpec((d,), "gain")
            specs[f"{norm}.bias"] = ParamSpec((d,), "bias")
    return specs


def _mlp_specs(config: MLPConfig) -> Dict[str, ParamSpec]:
    specs = {"embed": ParamSpec((config.vocab_size, config.embed_dim), "embedding")}
    widths = [config.n_tokens * config.embed_dim] + [config.hidden] * (config.n_layers - 1) + [config.n_classes]
    for k in range(config.n_layers):
        specs[f"layer{k}.w"] = ParamSpec((widths[k], widths[k + 1]), "weight", widths[k])
        specs[f"layer{k}.b"] = ParamSpec((widths[k + 1],), "bias")
    return specs


def _lstm_specs(config: LSTMConfig) -> Dict[str, ParamSpec]:
    e, h = config.embed_dim, config.hidden
    return {
        "embed": ParamSpec((config.vocab_size, e), "embedding"),
        "lstm.w_x": ParamSpec((e, 4 * h), "weight", e),
        "lstm.w_h": ParamSpec((h, 4 * h), "weight", h),
        "lstm.b": ParamSpec((4 * h,), "bias"),
        "head.w": ParamSpec((h, config.n_classes), "weight", h),
        "head.b": ParamSpec((config.n_classes,), "bias"),
    }


class ModelParams(Mapping[str, Tensor]):
    """
    Named parameter tensors of one model.

    Iteration is always in sorted path order, which fixes the order of
    initialization draws, optimizer updates and checkpoint blocks.

    Args:
        tensors (dict): Parameter path -> Tensor
        arch (str): Architecture tag ("transformer", "mlp" or "lstm")
    """

    def __init__(self, tensors: Mapping[str, Tensor], arch: str):
        self._tensors = {path: tensors[path] for path in sorted(tensors)}
        self.arch = arch

    def __getitem__(self, path: str) -> Tensor:
        return self._tensors[path]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def value_arrays(self) -> Dict[str, np.ndarray]:
        return {path: tensor.values for path, tensor in self._tensors.items()}

    def grad_arrays(self) -> Dict[str, np.ndarray]:
        """Gradients keyed by path (zeros for tensors that never received one)."""
        return {
            path: tensor.grad if tensor.grad is not None else np.zeros_like(tensor.values)
            for path, tensor in self._tensors.items()
        }

    def with_values(self, arrays: Mapping[str, np.ndarray]) -> "ModelParams":
        """Return a new collection holding the given arrays as trainable tensors."""
        if set(arrays) != set(self._tensors):
            raise ModelConfigError("Replacement values must cover exactly the same parameter paths")
        return ModelParams(
            {path: Tensor(arrays[path], requires_grad=True, name=path) for path in self._tensors}, self.arch
        )

    def fingerprint(self) -> str:
        """SHA-256 over paths, shapes and raw values."""
        digest = hashlib.sha256()
        for path, tensor in self._tensors.items():
            digest.update(path.encode())
            digest.update(repr(tensor.shape).encode())
            digest.update(np.ascontiguousarray(tensor.values).tobytes())
        return digest.hexdigest()


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """
    Initialize the parameters of a model.

    Weights and embedding tables are drawn from N(0, init_scale^2 / fan_in)
    (embedding rows use fan_in = 1), in sorted path order, from a PCG64
    generator seeded with ``seed``. Biases start at zero and layer-norm gains at one.

    Args:
        config: A model configuration
        seed (int): Initialization seed

    Returns:
        ModelParams: The initialized parameters
    """
    config.validate()
    rng = np.random.default_rng(seed)
    tensors = {}
    for path, spec in sorted(param_specs(config).items()):
        if spec.kind in ("weight", "embedding"):
            values = draw_normal(rng, spec.shape, config.init_scale / np.sqrt(spec.fan_in))
        elif spec.kind == "gain":
            values = np.ones(spec.shape)
        else:
            values = np.zeros(spec.shape)
        tensors[path] = Tensor(values, requires_grad=True, name=path, copy=False)
    logger.debug("Initialized %s with %d tensors (seed %d)", config.arch, len(tensors), seed)
    return ModelParams(tensors, config.arch)


def count_params(params: Mapping[str, Tensor], include_embeddings: bool = True) -> int:
    """
    Count parameter elements.

    Args:
        params: Parameter tensors keyed by path
        include_embeddings (bool): When False, the token-embedding and unembedding tables are skipped

    Returns:
        int: Number of scalar parameters
    """
    return sum(
        tensor.size for path, tensor in params.items() if include_embeddings or path not in EMBEDDING_PATHS
    )


def save_checkpoint(path: str, config: ModelConfig, params: ModelParams) -> None:
    """
    Write a checkpoint file.

    The first line is the config as JSON; every following line is one
    parameter as ``path|shape|base64 of little-endian float64 values``, with
    shape written as comma-separated dims, sorted by path.
    """
    with open(path, "w") as f:
        f.write(json.dumps(config_to_dict(config), sort_keys=True) + "\n")
        for name in sorted(params):
            values = params[name].values
            encoded = base64.b64encode(np.ascontiguousarray(values, dtype="<f8").tobytes()).decode("ascii")
            f.write(f"{name}|{','.join(str(dim) for dim in values.shape)}|{encoded}\n")


def load_checkpoint(path: str) -> Tuple[ModelConfig, ModelParams]:
    """
    Read a checkpoint written by save_checkpoint.

    Raises:
        ModelConfigError: For a malformed header or parameter line (the
            message names the line), or parameters that do not match the
            configuration
    """
    with open(path) as f:
        header = f.readline()
        try:
            config = config_from_dict(json.loads(header))
            config.validate()
        except (ValueError, TypeError) as e:
            raise ModelConfigError(f"Malformed checkpoint header at line 1: {e}") from e
        tensors = {}
        for line_number, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                name, shape_text, encoded = line.split("|")
                shape = tuple(int(dim) for dim in shape_text.split(","))
                values = np.frombuffer(base64.b64decode(encoded, validate=True), dtype="<f8").astype(np.float64).reshape(shape)
            except (ValueError, TypeError) as e:
                raise ModelConfigError(f"Malformed checkpoint block at line {line_number}: {e}") from e
            tensors[name] = Tensor(values, requires_grad=True, name=name)
    expected = param_specs(config)
    if set(tensors) != set(expected):
        raise ModelConfigError("Checkpoint parameters do not match its configuration")
    wrong = [name for name in sorted(expected) if tensors[name].values.shape != expected[name].shape]
    if wrong:
        raise ModelConfigError(f"Checkpoint parameter shapes do not match its configuration: {', '.join(wrong)}")
    return config, ModelParams(tensors, config.arch)
