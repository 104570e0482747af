"""Synthetic two-table benchmarks with planted noisy duplicates.

Generates a left table of random-token records and a right table mixing fresh
records with corrupted copies of left records (character edits plus token
drops), together with labeled train/test pair sets. Useful for demos and for
exercising the full pipeline without shipping external datasets. Everything
is deterministic given the seed.
"""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from .corpus import PairSet, Record, Table

_LETTERS = string.ascii_lowercase


@dataclass(frozen=True)
class SyntheticBenchmark:
    table_a: Table
    table_b: Table
    duplicates: PairSet  # every planted pair, label 1
    train: PairSet
    test: PairSet


def _token(rng: np.random.Generator, length_lo: int = 4, length_hi: int = 8) -> str:
    length = int(rng.integers(length_lo, length_hi + 1))
    return "".join(_LETTERS[i] for i in rng.integers(0, len(_LETTERS), size=length))


def _edit_token(token: str, rng: np.random.Generator) -> str:
    if not token:
        return token
    pos = int(rng.integers(0, len(token)))
    op = int(rng.integers(0, 3))
    ch = _LETTERS[int(rng.integers(0, len(_LETTERS)))]
    if op == 0:  # substitute
        return token[:pos] + ch + token[pos + 1 :]
    if op == 1:  # insert
        return token[:pos] + ch + token[pos:]
    if len(token) > 1:  # delete
        return token[:pos] + token[pos + 1 :]
    return ch


def _corrupt_value(
    value: str, rng: np.random.Generator, edit_prob: float, drop_prob: float
) -> str:
    tokens = value.split()
    kept = []
    for tok in tokens:
        if len(tokens) > 1 and rng.random() < drop_prob:
            continue
        kept.append(_edit_token(tok, rng) if rng.random() < edit_prob else tok)
    return " ".join(kept)


def _fresh_values(
    rng: np.random.Generator,
    vocab: list[str],
    weights: np.ndarray,
    arity: int,
    tokens_per_value: int,
) -> tuple[str, ...]:
    values = []
    for _ in range(arity):
        n_tok = int(rng.integers(max(1, tokens_per_value - 1), tokens_per_value + 2))
        idx = rng.choice(len(vocab), size=n_tok, p=weights)
        values.append(" ".join(vocab[i] for i in idx))
    return tuple(values)


def make_benchmark(
    seed: int = 0,
    n_left: int = 500,
    n_right: int = 500,
    n_duplicates: int = 100,
    arity: int = 4,
    vocab_size: int = 200,
    tokens_per_value: int = 3,
    edit_prob: float = 0.7,
    drop_prob: float = 0.35,
    zipf_exponent: float = 1.0,
    train_size: int = 200,
    test_size: int = 100,
    name_prefix: str = "synth",
) -> SyntheticBenchmark:
    """Build tables A and B where n_duplicates B-records are noisy copies of
    distinct A-records; the rest of B is fresh. Train/test pair sets draw
    their positives from the planted duplicates (disjointly) and their
    negatives from random non-duplicate pairs. A positive ``zipf_exponent``
    skews token frequencies so distinct records share vocabulary, which makes
    retrieval genuinely confusable instead of trivially separable."""
    if n_duplicates > min(n_left, n_right):
        raise ValueError("cannot plant more duplicates than records")
    rng = np.random.default_rng(seed)
    vocab = [_token(rng) for _ in range(vocab_size)]
    weights = 1.0 / np.arange(1, vocab_size + 1) ** zipf_exponent
    weights /= weights.sum()

    a_records = tuple(
        Record(id=str(i), values=_fresh_values(rng, vocab, weights, arity, tokens_per_value))
        for i in range(n_left)
    )
    dup_sources = rng.permutation(n_left)[:n_duplicates]
    b_records = []
    duplicates = []
    for j in range(n_right):
        if j < n_duplicates:
            src = a_records[dup_sources[j]]
            # Heterogeneous noise: real duplicate pairs range from exact
            # copies to heavily mangled ones, so each planted pair draws its
            # own severity factor.
            severity = rng.uniform(0.0, 1.0)
            values = tuple(
                _corrupt_value(v, rng, edit_prob * severity, drop_prob * severity)
                for v in src.values
            )
            duplicates.append((src.id, str(j), 1))
        else:
            values = _fresh_values(rng, vocab, weights, arity, tokens_per_value)
        b_records.append(Record(id=str(j), values=values))
    # Shuffle B so planted duplicates are not clustered at the top.
    order = rng.permutation(n_right)
    remap = {str(old): str(new) for new, old in enumerate(order)}
    b_records = tuple(
        Record(id=str(new), values=b_records[old].values) for new, old in enumerate(order)
    )
    duplicates = [(l, remap[r], y) for l, r, y in duplicates]

    table_a = Table(name=f"{name_prefix}_a", arity=arity, records=a_records)
    table_b = Table(name=f"{name_prefix}_b", arity=arity, records=b_records)

    dup_order = rng.permutation(len(duplicates))
    n_train_pos = min(train_size // 2, max(1, int(0.6 * len(duplicates))))
    n_test_pos = min(test_size // 2, len(duplicates) - n_train_pos)
    train_pos = [duplicates[i] for i in dup_order[:n_train_pos]]
    test_pos = [duplicates[i] for i in dup_order[n_train_pos : n_train_pos + n_test_pos]]

    dup_keys = {(l, r) for l, r, _ in duplicates}
    used: set[tuple[str, str]] = set(dup_keys)

    def negatives(count: int) -> list[tuple[str, str, int]]:
        out = []
        while len(out) < count:
            l = str(int(rng.integers(0, n_left)))
            r = str(int(rng.integers(0, n_right)))
            if (l, r) in used:
                continue
            used.add((l, r))
            out.append((l, r, 0))
        return out

    train_pairs = train_pos + negatives(train_size - len(train_pos))
    test_pairs = test_pos + negatives(test_size - len(test_pos))
    return SyntheticBenchmark(
        table_a=table_a,
        table_b=table_b,
        duplicates=PairSet(tuple(duplicates)),
        train=PairSet(tuple(train_pairs)),
        test=PairSet(tuple(test_pairs)),
    )
