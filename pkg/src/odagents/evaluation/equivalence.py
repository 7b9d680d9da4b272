"""Dataset-equivalence scoring for generated SQL.

Two result datasets are equivalent when an injective mapping from gold
columns to candidate columns makes the candidate's projection equal the gold
data: as an ordered sequence of rows when the example is order-sensitive,
otherwise as a multiset of whole row tuples (so values must keep their
row-to-row pairing). Column names never matter.

Numeric cells are compared after type unification with a relative tolerance
of 1e-9, realized by quantizing every number to 12 significant digits before
comparison so values can be fingerprinted and hashed consistently.

The mapping search backtracks over groups of content-identical columns; that
is worst-case factorial in the size of a duplicate group, which is fine at
result-set scale and is preferred over heuristics that could mis-score.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from typing import Any, Hashable, Sequence

from ..analytics import ResultDataset

REASONS = ("row_count", "no_column_mapping", "row_order", "row_mapping")


@dataclass(frozen=True)
class EquivalenceVerdict:
    correct: bool
    column_mapping: dict[str, str] | None = None  # gold column -> candidate column
    reason: str | None = None

    def __post_init__(self) -> None:
        if not self.correct and self.reason not in REASONS:
            raise ValueError(f"incorrect verdict requires a reason from {REASONS}")


def normalize_cell(value: Any) -> Hashable:
    """Canonical comparable form of one cell (shared with the test oracle)."""
    if value is None:
        return ("null",)
    if isinstance(value, bool):
        return ("num", float(int(value)))
    if isinstance(value, (int, float)):
        f = float(value)
        if f == 0.0:
            return ("num", 0.0)
        return ("num", float(f"{f:.12g}"))
    return ("str", str(value))


def _norm_rows(dataset: ResultDataset) -> list[tuple[Hashable, ...]]:
    return [tuple(normalize_cell(v) for v in row) for row in dataset.rows]


def _column(norm_rows: list[tuple[Hashable, ...]], idx: int) -> tuple[Hashable, ...]:
    return tuple(row[idx] for row in norm_rows)


def _assignments(candidates_per_gold: list[list[int]]):
    """All injective assignments gold-column -> candidate-column consistent
    with the per-column candidate lists, via backtracking (most constrained
    column first)."""
    order = sorted(range(len(candidates_per_gold)), key=lambda j: len(candidates_per_gold[j]))

    def backtrack(pos: int, used: set[int], acc: dict[int, int]):
        if pos == len(order):
            yield tuple(acc[j] for j in range(len(order)))
            return
        j = order[pos]
        for c in candidates_per_gold[j]:
            if c in used:
                continue
            used.add(c)
            acc[j] = c
            yield from backtrack(pos + 1, used, acc)
            used.discard(c)
            del acc[j]

    yield from backtrack(0, set(), {})


def dataset_equivalent(
    gold: ResultDataset,
    cand: ResultDataset,
    order_sensitive: bool,
    allow_extra_columns: bool = False,
) -> EquivalenceVerdict:
    if len(gold.rows) != len(cand.rows):
        return EquivalenceVerdict(False, reason="row_count")
    n_gold, n_cand = len(gold.columns), len(cand.columns)
    if n_cand < n_gold or (not allow_extra_columns and n_cand != n_gold):
        return EquivalenceVerdict(False, reason="no_column_mapping")

    gold_rows = _norm_rows(gold)
    cand_rows = _norm_rows(cand)
    gold_cols = [_column(gold_rows, j) for j in range(n_gold)]
    cand_cols = [_column(cand_rows, c) for c in range(n_cand)]

    # Fast path: an injection with per-column sequence equality makes the
    # projection equal gold row-for-row, which is correct in both order modes.
    seq_candidates = [
        [c for c in range(n_cand) if cand_cols[c] == gold_cols[j]] for j in range(n_gold)
    ]
    for sigma in _assignments(seq_candidates):
        return EquivalenceVerdict(True, column_mapping=_mapping(gold, cand, sigma))

    # Multiset-level compatibility drives both the order-insensitive check and
    # the reason discrimination for order-sensitive failures.
    gold_multisets = [Counter(col) for col in gold_cols]
    ms_candidates = [
        [c for c in range(n_cand) if Counter(cand_cols[c]) == gold_multisets[j]]
        for j in range(n_gold)
    ]
    gold_tuple_multiset = Counter(gold_rows)
    any_injection = False
    any_tuple_match: tuple[int, ...] | None = None
    for sigma in _assignments(ms_candidates):
        any_injection = True
        projected = Counter(tuple(row[c] for c in sigma) for row in cand_rows)
        if projected == gold_tuple_multiset:
            any_tuple_match = sigma
            if not order_sensitive:
                return EquivalenceVerdict(True, column_mapping=_mapping(gold, cand, sigma))
            break

    if not any_injection:
        return EquivalenceVerdict(False, reason="no_column_mapping")
    if order_sensitive:
        return EquivalenceVerdict(False, reason="row_order" if any_tuple_match else "row_mapping")
    return EquivalenceVerdict(False, reason="row_mapping")


def _mapping(gold: ResultDataset, cand: ResultDataset, sigma: Sequence[int]) -> dict[str, str]:
    return {gold.columns[j]: cand.columns[c] for j, c in enumerate(sigma)}


def brute_force_equivalent(
    gold: ResultDataset,
    cand: ResultDataset,
    order_sensitive: bool,
    allow_extra_columns: bool = False,
) -> EquivalenceVerdict:
    """Independent oracle: enumerate every injective column mapping and, for
    order-insensitive comparison, every row permutation. Exponentially slower
    than :func:`dataset_equivalent`; only for verification at toy scale."""
    if len(gold.rows) != len(cand.rows):
        return EquivalenceVerdict(False, reason="row_count")
    n_gold, n_cand = len(gold.columns), len(cand.columns)
    if n_cand < n_gold or (not allow_extra_columns and n_cand != n_gold):
        return EquivalenceVerdict(False, reason="no_column_mapping")

    gold_rows = _norm_rows(gold)
    cand_rows = _norm_rows(cand)
    n_rows = len(gold_rows)

    any_injection = False
    any_sorted_match = False
    for sigma in itertools.permutations(range(n_cand), n_gold):
        ok_multiset = all(
            sorted(row[sigma[j]] for row in cand_rows) == sorted(row[j] for row in gold_rows)
            for j in range(n_gold)
        )
        if not ok_multiset:
            continue
        any_injection = True
        projected = [tuple(row[c] for c in sigma) for row in cand_rows]
        if order_sensitive:
            if projected == gold_rows:
                return EquivalenceVerdict(True, column_mapping=_mapping(gold, cand, sigma))
            if sorted(projected) == sorted(gold_rows):
                any_sorted_match = True
        else:
            for pi in itertools.permutations(range(n_rows)):
                if all(projected[pi[i]] == gold_rows[i] for i in range(n_rows)):
                    return EquivalenceVerdict(True, column_mapping=_mapping(gold, cand, sigma))
    if not any_injection:
        return EquivalenceVerdict(False, reason="no_column_mapping")
    if order_sensitive and any_sorted_match:
        return EquivalenceVerdict(False, reason="row_order")
    return EquivalenceVerdict(False, reason="row_mapping")
