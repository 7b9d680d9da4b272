"""Lexical, retrieval, regression, classification, and cost metrics."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from ..gateway import BackendConfig, UsageLedger, ledger_totals
from ..router import ROUTING_CLASSES


def _words(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float
    undefined: bool = False


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def rouge1(candidate_text: str, reference_text: str) -> RougeScore:
    """Clipped unigram-overlap precision/recall/F1 over lowercase
    alphanumeric tokens. An empty side yields zeros flagged undefined."""
    cand, ref = _words(candidate_text), _words(reference_text)
    if not cand or not ref:
        return RougeScore(0.0, 0.0, 0.0, undefined=True)
    ref_counts: dict[str, int] = {}
    for t in ref:
        ref_counts[t] = ref_counts.get(t, 0) + 1
    overlap = 0
    for t in cand:
        if ref_counts.get(t, 0) > 0:
            overlap += 1
            ref_counts[t] -= 1
    precision = overlap / len(cand)
    recall = overlap / len(ref)
    return RougeScore(precision, recall, _f1(precision, recall))


def _lcs_length(a: list[str], b: list[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rougeL(candidate_text: str, reference_text: str) -> RougeScore:
    """Longest-common-subsequence precision/recall/F1, same tokenization as
    :func:`rouge1`."""
    cand, ref = _words(candidate_text), _words(reference_text)
    if not cand or not ref:
        return RougeScore(0.0, 0.0, 0.0, undefined=True)
    lcs = _lcs_length(cand, ref)
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return RougeScore(precision, recall, _f1(precision, recall))


def retrieval_metrics(
    runs: Sequence[Mapping[str, Any]], k: int = 2
) -> dict[str, Any]:
    """Top-1 accuracy and MAP@k over retrieval runs.

    Each run carries ``ranked`` (ids in rank order) and ``relevant`` (the
    relevant ids). AP@k averages precision at each relevant hit within the
    top k, divided by ``min(|relevant|, k)``; a run with an empty relevant
    set scores 0 and is flagged.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not runs:
        return {"top1_accuracy": 0.0, "map_at_k": 0.0, "k": k, "runs": 0, "flagged": 0}
    top1_hits = 0
    ap_sum = 0.0
    flagged = 0
    for run in runs:
        ranked = list(run["ranked"])
        relevant = set(run["relevant"])
        if not relevant:
            flagged += 1
            continue
        if ranked and ranked[0] in relevant:
            top1_hits += 1
        hits = 0
        precision_sum = 0.0
        for rank, item in enumerate(ranked[:k], start=1):
            if item in relevant:
                hits += 1
                precision_sum += hits / rank
        ap_sum += precision_sum / min(len(relevant), k)
    scored = len(runs)
    return {
        "top1_accuracy": top1_hits / scored,
        "map_at_k": ap_sum / scored,
        "k": k,
        "runs": scored,
        "flagged": flagged,
    }


def regression_errors(
    preds: Sequence[float], truths: Sequence[float]
) -> dict[str, float]:
    """MAE, RMSE and MAPE (as a fraction). Entries with truth = 0 are skipped
    for MAPE and counted in ``mape_skipped``."""
    if len(preds) != len(truths):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(truths)} truths")
    if not preds:
        raise ValueError("empty inputs")
    n = len(preds)
    abs_errors = [abs(p - t) for p, t in zip(preds, truths)]
    mae = sum(abs_errors) / n
    rmse = math.sqrt(sum(e**2 for e in abs_errors) / n)
    ratios = [abs(p - t) / abs(t) for p, t in zip(preds, truths) if t != 0]
    skipped = n - len(ratios)
    mape = sum(ratios) / len(ratios) if ratios else float("nan")
    return {"mae": mae, "rmse": rmse, "mape": mape, "mape_skipped": skipped}


@dataclass
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: list[list[int]]

    @classmethod
    def empty(cls, classes: Sequence[str] = ROUTING_CLASSES) -> "ConfusionMatrix":
        n = len(classes)
        return cls(tuple(classes), [[0] * n for _ in range(n)])

    def add(self, true_class: str, predicted_class: str) -> None:
        self.counts[self.classes.index(true_class)][self.classes.index(predicted_class)] += 1

    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def is_diagonal(self) -> bool:
        return all(
            self.counts[i][j] == 0
            for i in range(len(self.classes))
            for j in range(len(self.classes))
            if i != j
        )

    def to_records(self) -> dict[str, Any]:
        return {"classes": list(self.classes), "counts": [list(r) for r in self.counts]}


def routing_eval(cases: Sequence[Mapping[str, str]]) -> dict[str, Any]:
    """Confusion matrix, per-class precision/recall/F1 and macro F1 over the
    routing classes.

    The macro mean covers classes present in the truth or the predictions;
    classes absent from both are excluded. A per-class score with a zero
    denominator is 0.
    """
    matrix = ConfusionMatrix.empty()
    for case in cases:
        expected, predicted = case["expected_class"], case["predicted_class"]
        if expected not in ROUTING_CLASSES:
            raise ValueError(f"unknown routing class {expected!r}")
        if predicted not in ROUTING_CLASSES:
            raise ValueError(f"unknown routing class {predicted!r}")
        matrix.add(expected, predicted)

    per_class: dict[str, dict[str, float]] = {}
    present: list[str] = []
    for i, label in enumerate(matrix.classes):
        tp = matrix.counts[i][i]
        fp = sum(matrix.counts[r][i] for r in range(len(matrix.classes))) - tp
        fn = sum(matrix.counts[i]) - tp
        if tp + fp + fn == 0:
            continue
        present.append(label)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        per_class[label] = {"precision": precision, "recall": recall, "f1": _f1(precision, recall)}
    macro_f1 = sum(per_class[c]["f1"] for c in present) / len(present) if present else 0.0
    return {"confusion_matrix": matrix, "per_class": per_class, "macro_f1": macro_f1}


@dataclass(frozen=True)
class LikertRecord:
    example_id: str
    routing_class: str
    score: int

    def __post_init__(self) -> None:
        if not 1 <= self.score <= 5:
            raise ValueError("Likert score must be in [1, 5]")


def load_likert_records(path: str) -> list[LikertRecord]:
    """Read rater scores from a delimited file with the header
    ``example_id,routing_class,score``."""
    import csv

    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(
                LikertRecord(row["example_id"], row["routing_class"], int(row["score"]))
            )
    return records


def likert_aggregate(records: Sequence[LikertRecord]) -> dict[str, Any]:
    """Per-class mean and 1..5 histogram plus the overall mean; classes with
    no records are omitted."""
    per_class: dict[str, dict[str, Any]] = {}
    for r in records:
        bucket = per_class.setdefault(r.routing_class, {"scores": []})
        bucket["scores"].append(r.score)
    report: dict[str, Any] = {"per_class": {}, "overall_mean": 0.0, "total": len(records)}
    for label, bucket in sorted(per_class.items()):
        scores = bucket["scores"]
        histogram = {s: scores.count(s) for s in range(1, 6)}
        report["per_class"][label] = {
            "mean": sum(scores) / len(scores),
            "count": len(scores),
            "histogram": histogram,
        }
    if records:
        report["overall_mean"] = sum(r.score for r in records) / len(records)
    return report


def cost_report(
    ledger: UsageLedger, configs: Mapping[str, BackendConfig]
) -> dict[str, Any]:
    """Exact token-cost accounting per backend plus pairwise cost ratios in
    each direction (input and output)."""
    backend_ids = sorted({e.backend_id for e in ledger.entries})
    for backend_id in backend_ids:
        if backend_id not in configs:
            raise KeyError(f"no config for backend {backend_id!r} present in the ledger")
    backends: dict[str, dict[str, float]] = {}
    for backend_id in backend_ids:
        totals = ledger_totals(ledger, backend_id)
        cfg = configs[backend_id]
        input_cost = totals.input_tokens * cfg.price_per_input_token
        output_cost = totals.output_tokens * cfg.price_per_output_token
        backends[backend_id] = {
            "input_tokens": totals.input_tokens,
            "output_tokens": totals.output_tokens,
            "input_cost": input_cost,
            "output_cost": output_cost,
            "total_cost": input_cost + output_cost,
        }
    ratios: dict[str, dict[str, float | None]] = {}
    for a in backend_ids:
        for b in backend_ids:
            if a == b:
                continue
            ratios[f"{a}/{b}"] = {
                "input": _ratio(backends[a]["input_cost"], backends[b]["input_cost"]),
                "output": _ratio(backends[a]["output_cost"], backends[b]["output_cost"]),
            }
    return {"backends": backends, "ratios": ratios}


def _ratio(a: float, b: float) -> float | None:
    if b == 0:
        return None
    return a / b
