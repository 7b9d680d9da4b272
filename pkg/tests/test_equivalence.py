import time

import numpy as np
import pytest

from odagents.analytics import ResultDataset
from odagents.evaluation.equivalence import (
    EquivalenceVerdict,
    brute_force_equivalent,
    dataset_equivalent,
    normalize_cell,
)


def dataset(columns, rows):
    return ResultDataset(tuple(columns), tuple(tuple(r) for r in rows), tuple("text" for _ in columns))


class TestBasics:
    def test_identity_correct(self):
        d = dataset(["a"], [[1], [2], [3]])
        verdict = dataset_equivalent(d, d, order_sensitive=True)
        assert verdict.correct
        assert verdict.column_mapping == {"a": "a"}

    def test_column_renaming_and_permutation(self):
        gold = dataset(["x", "y"], [[1, "A"], [2, "B"]])
        cand = dataset(["q", "p"], [["A", 1], ["B", 2]])  # p==x, q==y
        verdict = dataset_equivalent(gold, cand, order_sensitive=False)
        assert verdict.correct
        assert verdict.column_mapping == {"x": "p", "y": "q"}
        assert brute_force_equivalent(gold, cand, order_sensitive=False).correct

    def test_reversed_rows_order_sensitive(self):
        gold = dataset(["a", "b"], [[1, "x"], [2, "y"], [3, "z"]])
        cand = dataset(["a", "b"], [[3, "z"], [2, "y"], [1, "x"]])
        verdict = dataset_equivalent(gold, cand, order_sensitive=True)
        assert not verdict.correct
        assert verdict.reason == "row_order"
        oracle = brute_force_equivalent(gold, cand, order_sensitive=True)
        assert oracle.reason == "row_order"
        # and order-insensitive comparison accepts the same pair
        assert dataset_equivalent(gold, cand, order_sensitive=False).correct

    def test_broken_row_mapping(self):
        gold = dataset(["a", "b"], [[1, "A"], [2, "B"]])
        cand = dataset(["a", "b"], [[1, "B"], [2, "A"]])  # column multisets match
        verdict = dataset_equivalent(gold, cand, order_sensitive=False)
        assert not verdict.correct
        assert verdict.reason == "row_mapping"
        assert brute_force_equivalent(gold, cand, order_sensitive=False).reason == "row_mapping"

    def test_row_count_mismatch(self):
        gold = dataset(["a"], [[1], [2]])
        cand = dataset(["a"], [[1]])
        assert dataset_equivalent(gold, cand, order_sensitive=False).reason == "row_count"

    def test_no_column_mapping(self):
        gold = dataset(["a"], [[1], [2]])
        cand = dataset(["a"], [[1], [9]])
        assert dataset_equivalent(gold, cand, order_sensitive=False).reason == "no_column_mapping"

    def test_extra_columns_fail_unless_allowed(self):
        gold = dataset(["a"], [[1], [2]])
        cand = dataset(["a", "extra"], [[1, "x"], [2, "y"]])
        assert dataset_equivalent(gold, cand, order_sensitive=False).reason == "no_column_mapping"
        allowed = dataset_equivalent(gold, cand, order_sensitive=False, allow_extra_columns=True)
        assert allowed.correct
        assert allowed.column_mapping == {"a": "a"}

    def test_fewer_candidate_columns(self):
        gold = dataset(["a", "b"], [[1, 2]])
        cand = dataset(["a"], [[1]])
        assert dataset_equivalent(gold, cand, order_sensitive=False).reason == "no_column_mapping"

    def test_incorrect_verdict_requires_reason(self):
        with pytest.raises(ValueError):
            EquivalenceVerdict(False)


class TestNumericComparison:
    def test_int_float_unified(self):
        gold = dataset(["a"], [[1], [2]])
        cand = dataset(["a"], [[1.0], [2.0]])
        assert dataset_equivalent(gold, cand, order_sensitive=True).correct

    def test_relative_tolerance(self):
        gold = dataset(["a"], [[1.0e9]])
        cand = dataset(["a"], [[1.0e9 * (1 + 1e-13)]])
        assert dataset_equivalent(gold, cand, order_sensitive=True).correct

    def test_distinct_numbers_not_conflated(self):
        gold = dataset(["a"], [[1.0]])
        cand = dataset(["a"], [[1.001]])
        assert not dataset_equivalent(gold, cand, order_sensitive=True).correct

    def test_normalize_cell_kinds(self):
        assert normalize_cell(None) == ("null",)
        assert normalize_cell(3) == normalize_cell(3.0)
        assert normalize_cell("3") != normalize_cell(3)


class TestRenamingSymmetry:
    def test_verdict_stable_under_column_permutations(self):
        gold = dataset(["a", "b", "c"], [[1, "x", 5.0], [2, "y", 6.0], [1, "x", 7.5]])
        base = dataset_equivalent(gold, gold, order_sensitive=False).correct
        import itertools

        for perm in itertools.permutations(range(3)):
            cols = [gold.columns[i] for i in perm]
            rows = [[row[i] for i in perm] for row in gold.rows]
            cand = dataset([f"c{i}" for i in range(3)], rows)
            assert dataset_equivalent(gold, cand, order_sensitive=False).correct == base


def random_dataset(rng, n_rows, n_cols):
    alphabet = [0, 1, 2, "a", "b", None, 1.5]
    rows = [[alphabet[rng.integers(len(alphabet))] for _ in range(n_cols)] for _ in range(n_rows)]
    return dataset([f"col{i}" for i in range(n_cols)], rows)


def derived_candidate(rng, gold):
    """Apply verdict-preserving and verdict-breaking mutations at random."""
    cols = list(range(len(gold.columns)))
    rng.shuffle(cols)
    rows = [[row[c] for c in cols] for row in gold.rows]
    order = list(range(len(rows)))
    if rng.integers(2):
        rng.shuffle(order)
    rows = [rows[i] for i in order]
    if rng.integers(3) == 0 and rows:
        rows[rng.integers(len(rows))][rng.integers(len(cols))] = "mutant"
    return dataset([f"r{i}" for i in range(len(cols))], rows)


class TestOracleAgreement:
    def test_200_seeded_pairs_match_brute_force(self):
        started = time.monotonic()
        checked = {"correct": 0, "incorrect": 0}
        for seed in range(200):
            rng = np.random.default_rng(seed)
            n_rows = int(rng.integers(0, 6))
            n_cols = int(rng.integers(1, 5))
            gold = random_dataset(rng, n_rows, n_cols)
            if rng.integers(2):
                cand = derived_candidate(rng, gold)
            else:
                cand = random_dataset(rng, n_rows if rng.integers(2) else int(rng.integers(0, 6)), n_cols)
            order_sensitive = bool(rng.integers(2))
            fast = dataset_equivalent(gold, cand, order_sensitive)
            slow = brute_force_equivalent(gold, cand, order_sensitive)
            assert fast.correct == slow.correct, f"seed {seed}"
            assert fast.reason == slow.reason, f"seed {seed}"
            checked["correct" if fast.correct else "incorrect"] += 1
        assert checked["correct"] > 20 and checked["incorrect"] > 20
        assert time.monotonic() - started < 10.0
