"""
Tests for the modular arithmetic data module

Exhaustive at small moduli, sampled at p = 97.
"""

import csv
import math
from fractions import Fraction
import os
import sys

import numpy as np
import pytest

# Add the parent directory to the path so we can import the modularData package
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from modularData.modular_data import (
    DomainError,
    Example,
    ModTask,
    SplitMix64,
    TokenVocab,
    VocabError,
    decode_dictionary,
    decode_simple,
    encode_batch,
    encode_dictionary,
    encode_simple,
    enumerate_pairs,
    mod_add,
    split_dataset,
    train_size,
    write_dataset_dump,
)

SMALL_MODULI = [2, 3, 5, 11]
ALPHAS = [0.1, 0.3, 0.5, 0.7, 0.9]


def test_mod_add_examples():
    assert mod_add(0, 0, 97) == 0
    assert mod_add(96, 1, 97) == 0
    assert mod_add(50, 60, 97) == 13


def test_mod_add_rejects_out_of_range():
    with pytest.raises(DomainError):
        mod_add(97, 0, 97)
    with pytest.raises(DomainError):
        mod_add(0, -1, 97)


def test_enumerate_pairs():
    assert enumerate_pairs(2) == [Example(0, 0, 0), Example(0, 1, 1), Example(1, 0, 1), Example(1, 1, 0)]
    assert len(enumerate_pairs(97)) == 9409
    with pytest.raises(DomainError):
        enumerate_pairs(1)


@pytest.mark.parametrize("p", SMALL_MODULI + [13])
def test_labels_match_brute_force(p):
    examples = enumerate_pairs(p)
    assert [(ex.x, ex.y) for ex in examples] == [(x, y) for x in range(p) for y in range(p)]
    for ex in examples:
        assert ex.label == (ex.x + ex.y) % p


def test_split_sizes_at_97():
    split = split_dataset(ModTask(97), 0.3, seed=0)
    assert (len(split.train), len(split.val)) == (2822, 6587)
    assert len(split_dataset(ModTask(97), 0.5, seed=0).train) == 4704


@pytest.mark.parametrize("p", SMALL_MODULI)
@pytest.mark.parametrize("alpha", ALPHAS)
def test_split_partitions_the_universe(p, alpha):
    for seed in (0, 1, 12345):
        split = split_dataset(ModTask(p), alpha, seed)
        train, val = set(split.train), set(split.val)
        assert len(train) == len(split.train) and len(val) == len(split.val)
        assert not train & val
        assert train | val == set(enumerate_pairs(p))
        assert len(split.train) == math.floor(Fraction(str(alpha)) * p * p)


def test_train_size_is_exact_for_decimal_fractions():
    # 0.57 * 100 and 0.29 * 100 land just below an integer in binary floating point
    assert train_size(0.57, 10) == 57
    assert train_size(0.29, 10) == 29
    assert train_size(0.3, 97) == 2822
    assert train_size(1 / 3, 3) == 2


def test_split_sampled_invariants_at_97():
    for seed in (3, 99):
        split = split_dataset(ModTask(97), 0.45, seed)
        assert not set(split.train) & set(split.val)
        assert len(split.train) + len(split.val) == 9409


def test_split_is_deterministic():
    first = split_dataset(ModTask(97), 0.3, seed=7)
    second = split_dataset(ModTask(97), 0.3, seed=7)
    assert first.train == second.train and first.val == second.val
    other = split_dataset(ModTask(97), 0.3, seed=8)
    assert other.train != first.train


def test_split_rejects_bad_alpha():
    for alpha in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(DomainError):
            split_dataset(ModTask(11), alpha, seed=0)


def test_splitmix64_reference_values():
    # Reference outputs of SplitMix64 seeded with 0.
    rng = SplitMix64(0)
    assert rng.next_u64() == 0xE220A8397B1DCDAF
    assert rng.next_u64() == 0x6E789E6AA1B965F4
    assert rng.next_u64() == 0x06C45D188009454F


def test_next_below_stays_in_range():
    rng = SplitMix64(42)
    draws = [rng.next_below(7) for _ in range(2000)]
    assert min(draws) == 0 and max(draws) == 6


def test_encode_simple():
    task = ModTask(97)
    assert encode_simple(Example(1, 2, 3), task) == ([1, 2, 97], 3)
    assert encode_simple(Example(0, 0, 0), task) == ([0, 0, 97], 0)


def test_encode_dictionary_with_custom_vocab():
    vocab = TokenVocab({1: 130, 2: 131, 3: 132, "+": 3, "=": 10}, p=97)
    assert encode_dictionary(Example(1, 2, 3), vocab) == ([130, 3, 131, 10], 132)


def test_encode_dictionary_with_default_vocab():
    vocab = TokenVocab.default(97)
    assert encode_dictionary(Example(0, 0, 0), vocab) == ([0, 97, 0, 98], 0)
    assert vocab.size == 99 and vocab.is_contiguous()


def test_encode_dictionary_missing_token():
    vocab = TokenVocab({1: 130, "+": 3, "=": 10}, p=97)
    with pytest.raises(VocabError):
        encode_dictionary(Example(1, 2, 3), vocab)


def test_vocab_rejects_duplicate_indices():
    with pytest.raises(VocabError):
        TokenVocab({0: 0, 1: 0}, p=2)


def test_vocab_json_round_trip():
    vocab = TokenVocab.default(5)
    restored = TokenVocab.from_json(vocab.to_json())
    assert restored.token_to_index == vocab.token_to_index and restored.p == 5


@pytest.mark.parametrize("p", SMALL_MODULI)
def test_encodings_decode_back(p):
    task, vocab = ModTask(p), TokenVocab.default(p)
    for ex in enumerate_pairs(p):
        tokens, target = encode_simple(ex, task)
        assert len(tokens) == 3
        assert decode_simple(tokens, target, task) == ex
        tokens, target = encode_dictionary(ex, vocab)
        assert len(tokens) == 4
        assert decode_dictionary(tokens, target, vocab) == ex


def test_encode_batch_shapes():
    task = ModTask(5)
    examples = enumerate_pairs(5)
    ids, targets = encode_batch(examples, "simple", task)
    assert ids.shape == (25, 3) and targets.shape == (25,)
    assert ids.dtype == np.int64
    ids, targets = encode_batch(examples, "dictionary", task)
    assert ids.shape == (25, 4)
    assert list(ids[7]) == [1, 5, 2, 6] and targets[7] == 3
    with pytest.raises(DomainError):
        encode_batch(examples, "binary", task)


def test_dataset_dump(tmp_path):
    split = split_dataset(ModTask(3), 0.5, seed=1)
    path = tmp_path / "dataset.csv"
    write_dataset_dump(split, str(path))
    with open(path) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["x", "y", "label", "split"]
    assert len(rows) == 10
    assert sum(1 for row in rows[1:] if row[3] == "train") == 4
    for x, y, label, _ in rows[1:]:
        assert int(label) == (int(x) + int(y)) % 3
