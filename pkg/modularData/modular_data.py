"""
Modular Arithmetic Data Module

This module generates the (x + y) mod p dataset and prepares it for training.
It includes functions for:
1. Computing labels and enumerating all p^2 input pairs
2. Splitting the pairs into train/validation sets by a training fraction alpha
3. Encoding examples with the simple (x, y, p) encoding
4. Encoding examples with the dictionary encoding [x, +, y, =] -> label
5. Dumping a split to CSV

Splits are drawn with a SplitMix64 generator driving a Fisher-Yates shuffle,
so the same (p, alpha, seed) gives the same split in every process and on
every platform.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from tensorEngine.errors import GrokLabError

logger = logging.getLogger(__name__)

ENCODINGS = ("simple", "dictionary")
PLUS_TOKEN = "+"
EQUALS_TOKEN = "="

MASK64 = (1 << 64) - 1
SPLITMIX_INCREMENT = 0x9E3779B97F4A7C15
SPLITMIX_MULTIPLIER_1 = 0xBF58476D1CE4E5B9
SPLITMIX_MULTIPLIER_2 = 0x94D049BB133111EB


class DomainError(GrokLabError, ValueError):
    """Raised when an argument lies outside the task's domain."""


class VocabError(GrokLabError, KeyError):
    """Raised when a token has no index in the vocabulary."""


@dataclass(frozen=True)
class ModTask:
    """The modular addition task; p is the modulus (97 in every reported experiment)."""

    p: int = 97

    def validate(self) -> None:
        if not isinstance(self.p, int) or self.p < 2:
            raise DomainError(f"Modulus p must be an integer >= 2, got {self.p!r}")

    @property
    def universe_size(self) -> int:
        return self.p * self.p


class Example(NamedTuple):
    """One equation x + y = label (mod p)."""

    x: int
    y: int
    label: int


@dataclass
class Split:
    """Train/validation partition of all p^2 examples."""

    alpha: float
    seed: int
    train: List[Example] = field(default_factory=list)
    val: List[Example] = field(default_factory=list)


class SplitMix64:
    """
    SplitMix64 pseudo-random generator.

    state <- state + 0x9E3779B97F4A7C15 (mod 2^64), then the output is mixed with
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9, z = (z ^ (z >> 27)) * 0x94D049BB133111EB,
    z ^ (z >> 31).
    """

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + SPLITMIX_INCREMENT) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * SPLITMIX_MULTIPLIER_1) & MASK64
        z = ((z ^ (z >> 27)) * SPLITMIX_MULTIPLIER_2) & MASK64
        return z ^ (z >> 31)

    def next_below(self, bound: int) -> int:
        """Uniform integer in [0, bound), by rejection so there is no modulo bias."""
        if bound <= 0:
            raise DomainError(f"bound must be positive, got {bound}")
        threshold = (1 << 64) - ((1 << 64) % bound)
        while True:
            draw = self.next_u64()
            if draw < threshold:
                return draw % bound


def fisher_yates_shuffle(items: list, rng: SplitMix64) -> list:
    """Return a shuffled copy of items (Fisher-Yates, last index down to 1)."""
    shuffled = list(items)
    for i in range(len(shuffled) - 1, 0, -1):
        j = rng.next_below(i + 1)
        shuffled[i], shuffled[j] = shuffled[j], shuffled[i]
    return shuffled


class TokenVocab:
    """
    Explicit token -> index assignment for the dictionary encoding.

    Tokens are the residues 0..p-1 (as ints) plus the operator "+" and the
    equality "=". The default assignment is residue r -> r, "+" -> p, "=" -> p + 1.
    A custom assignment may use any unique non-negative indices.

    Args:
        token_to_index (dict): Mapping covering every residue and both operator tokens
        p (int): The modulus the vocabulary covers
    """

    def __init__(self, token_to_index: Dict[Union[int, str], int], p: int):
        self.p = p
        self.token_to_index = dict(token_to_index)
        indices = list(self.token_to_index.values())
        if len(set(indices)) != len(indices):
            raise VocabError("Vocabulary indices must be unique")
        if any(index < 0 for index in indices):
            raise VocabError("Vocabulary indices must be non-negative")
        self.index_to_token = {index: token for token, index in self.token_to_index.items()}

    @classmethod
    def default(cls, p: int) -> "TokenVocab":
        mapping: Dict[Union[int, str], int] = {residue: residue for residue in range(p)}
        mapping[PLUS_TOKEN] = p
        mapping[EQUALS_TOKEN] = p + 1
        return cls(mapping, p)

    @property
    def size(self) -> int:
        """Number of output slots a model needs (largest index + 1)."""
        return max(self.token_to_index.values()) + 1

    def is_contiguous(self) -> bool:
        return sorted(self.token_to_index.values()) == list(range(len(self.token_to_index)))

    def index(self, token: Union[int, str]) -> int:
        try:
            return self.token_to_index[token]
        except KeyError:
            raise VocabError(f"Token {token!r} is not in the vocabulary") from None

    def token(self, index: int) -> Union[int, str]:
        try:
            return self.index_to_token[index]
        except KeyError:
            raise VocabError(f"Index {index} is not assigned to any token") from None

    def to_json(self) -> str:
        """Serialize the assignment; residue keys are written as decimal strings."""
        return json.dumps({"p": self.p, "tokens": {str(token): index for token, index in self.token_to_index.items()}}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TokenVocab":
        data = json.loads(text)
        mapping: Dict[Union[int, str], int] = {}
        for token, index in data["tokens"].items():
            mapping[int(token) if token.isdigit() else token] = int(index)
        return cls(mapping, int(data["p"]))


def mod_add(x: int, y: int, p: int) -> int:
    """
    Return (x + y) mod p.

    Raises:
        DomainError: If x or y is outside [0, p)
    """
    if not (0 <= x < p and 0 <= y < p):
        raise DomainError(f"Operands must lie in [0, {p}), got x={x}, y={y}")
    return (x + y) % p


def enumerate_pairs(p: int) -> List[Example]:
    """All p^2 examples in lexicographic (x, y) order."""
    ModTask(p).validate()
    return [Example(x, y, mod_add(x, y, p)) for x in range(p) for y in range(p)]


def train_size(alpha: float, p: int) -> int:
    """Number of training examples, floor(alpha * p^2) with alpha taken at its shortest decimal value."""
    return math.floor(Fraction(repr(float(alpha))) * p * p)


def split_dataset(task: ModTask, alpha: float, seed: int) -> Split:
    """
    Randomly partition all p^2 pairs into train and validation sets.

    The enumerated pairs are shuffled with SplitMix64(seed) and Fisher-Yates;
    the first floor(alpha * p^2) go to train and the rest to validation.

    Args:
        task (ModTask): The task (holds p)
        alpha (float): Training data fraction in (0, 1)
        seed (int): Seed of the split generator

    Returns:
        Split: The partition

    Raises:
        DomainError: If alpha is outside (0, 1)
    """
    task.validate()
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    shuffled = fisher_yates_shuffle(enumerate_pairs(task.p), SplitMix64(seed))
    cut = train_size(alpha, task.p)
    logger.debug("Split p=%d alpha=%s seed=%d: %d train / %d val", task.p, alpha, seed, cut, len(shuffled) - cut)
    return Split(alpha=alpha, seed=seed, train=shuffled[:cut], val=shuffled[cut:])


def encode_simple(ex: Example, task: ModTask) -> Tuple[List[int], int]:
    """Simple encoding: input tokens [x, y, p], target label."""
    return [ex.x, ex.y, task.p], ex.label


def decode_simple(tokens: Sequence[int], target: int, task: ModTask) -> Example:
    """Invert encode_simple."""
    if len(tokens) != 3 or tokens[2] != task.p:
        raise DomainError(f"Not a simple encoding for p={task.p}: {list(tokens)}")
    return Example(int(tokens[0]), int(tokens[1]), int(target))


def encode_dictionary(ex: Example, vocab: TokenVocab) -> Tuple[List[int], int]:
    """
    Dictionary encoding: input [id(x), id(+), id(y), id(=)], target id(label).

    With the vocabulary {1: 130, 2: 131, 3: 132, "+": 3, "=": 10}, the example
    1 + 2 = 3 encodes to input [130, 3, 131, 10] and target 132.

    Raises:
        VocabError: If a token has no index
    """
    tokens = [vocab.index(ex.x), vocab.index(PLUS_TOKEN), vocab.index(ex.y), vocab.index(EQUALS_TOKEN)]
    return tokens, vocab.index(ex.label)


def decode_dictionary(tokens: Sequence[int], target: int, vocab: TokenVocab) -> Example:
    """Invert encode_dictionary."""
    if len(tokens) != 4:
        raise DomainError(f"Dictionary encoding has 4 input tokens, got {len(tokens)}")
    x, plus, y, equals = (vocab.token(int(index)) for index in tokens)
    if plus != PLUS_TOKEN or equals != EQUALS_TOKEN:
        raise DomainError(f"Malformed dictionary encoding: {list(tokens)}")
    return Example(x, y, vocab.token(int(target)))


def encode_batch(
    examples: Sequence[Example],
    encoding: str,
    task: ModTask,
    vocab: Optional[TokenVocab] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Encode a list of examples into an id matrix and a target vector.

    Args:
        examples (list): Examples to encode
        encoding (str): "simple" or "dictionary"
        task (ModTask): The task
        vocab (TokenVocab, optional): Dictionary vocabulary (default assignment when omitted)

    Returns:
        tuple: (ids of shape (n, 3) or (n, 4), targets of shape (n,)), both int64
    """
    if encoding == "simple":
        pairs = [encode_simple(ex, task) for ex in examples]
    elif encoding == "dictionary":
        vocab = vocab or TokenVocab.default(task.p)
        pairs = [encode_dictionary(ex, vocab) for ex in examples]
    else:
        raise DomainError(f"Unknown encoding: {encoding}. Valid encodings are: {', '.join(ENCODINGS)}")
    width = 3 if encoding == "simple" else 4
    ids = np.array([tokens for tokens, _ in pairs], dtype=np.int64).reshape(-1, width)
    targets = np.array([target for _, target in pairs], dtype=np.int64)
    return ids, targets


def write_dataset_dump(split: Split, path: str) -> None:
    """Write every example of a split as x,y,label,split rows (train first, then val)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["x", "y", "label", "split"])
        for name, examples in (("train", split.train), ("val", split.val)):
            for ex in examples:
                writer.writerow([ex.x, ex.y, ex.label, name])
