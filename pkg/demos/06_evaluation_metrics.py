"""
The measurement toolkit
=======================

Every number the platform reports comes from a small set of exactly specified
metrics. The most interesting one is dataset equivalence for generated SQL:
two result sets are the same answer when some renaming of candidate columns
reproduces the gold data with row pairing intact, and, for order-sensitive
questions, in the same row order.
"""

from odagents.analytics import ResultDataset
from odagents.evaluation import (
    dataset_equivalent,
    likert_aggregate,
    regression_errors,
    retrieval_metrics,
    rouge1,
    rougeL,
    routing_eval,
)
from odagents.evaluation.metrics import LikertRecord


def ds(columns, rows):
    return ResultDataset(tuple(columns), tuple(tuple(r) for r in rows), tuple("text" for _ in columns))


gold = ds(["domain", "jobs"], [["CFD", 10], ["Physics", 7]])
renamed = ds(["a", "b"], [[10, "CFD"], [7, "Physics"]])  # columns swapped and renamed
print("renamed/permuted columns:", dataset_equivalent(gold, renamed, order_sensitive=False))

reversed_rows = ds(["domain", "jobs"], [["Physics", 7], ["CFD", 10]])
print("reversed rows, order-sensitive:", dataset_equivalent(gold, reversed_rows, order_sensitive=True))

broken_pairing = ds(["domain", "jobs"], [["CFD", 7], ["Physics", 10]])
print("broken row pairing:", dataset_equivalent(gold, broken_pairing, order_sensitive=False))

print("\nROUGE-1 of 'the cat sat' vs 'the cat':", rouge1("the cat sat", "the cat"))
print("ROUGE-L of 'a b c d' vs 'a c b d':", rougeL("a b c d", "a c b d"))

runs = [{"ranked": ["x", "correct"], "relevant": ["correct"]}]
print("\nretrieval, relevant at rank 2, k=2:", retrieval_metrics(runs, k=2))

print("\nregression errors:", regression_errors([2.0, 3.0], [1.0, 2.0]))

cases = [
    {"expected_class": "RAG", "predicted_class": "RAG"},
    {"expected_class": "RAG", "predicted_class": "SQL"},
    {"expected_class": "SQL", "predicted_class": "SQL"},
    {"expected_class": "SQL", "predicted_class": "SQL"},
]
print("macro F1 of the hand case:", round(routing_eval(cases)["macro_f1"], 6))

records = [LikertRecord("e1", "RAG", 5), LikertRecord("e2", "RAG", 4), LikertRecord("e3", "SQL", 3)]
summary = likert_aggregate(records)
print("\nLikert per class:", {k: v["mean"] for k, v in summary["per_class"].items()},
      "overall:", summary["overall_mean"])
