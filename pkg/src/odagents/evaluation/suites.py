"""Suite runners: drive an agent over a line-delimited dataset and report.

Datasets are JSONL files, one example per line; malformed lines are skipped
and listed in the report, and example-level failures score as incorrect
rather than aborting a suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from ..analytics import SqlGenerationError, generate_and_repair, sql_complexity_profile
from ..conversation import MessageHistory
from ..prediction import FIELD_NAMES, InterpretationError, interpret_query
from .equivalence import dataset_equivalent
from .metrics import (
    ConfusionMatrix,
    cost_report,
    regression_errors,
    retrieval_metrics,
    rouge1,
    rougeL,
    routing_eval,
)

SUITE_KINDS = ("ir", "da", "pa_interp", "pa_regress", "routing", "cost")


@dataclass
class MetricReport:
    name: str
    total: int
    aggregates: dict[str, Any] = field(default_factory=dict)
    slices: dict[str, list[dict[str, Any]]] = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)

    def to_records(self) -> dict[str, Any]:
        aggregates = {
            k: (v.to_records() if isinstance(v, ConfusionMatrix) else v)
            for k, v in self.aggregates.items()
        }
        return {
            "name": self.name,
            "total": self.total,
            "aggregates": aggregates,
            "slices": self.slices,
            "skipped": self.skipped,
        }

    def format_table(self) -> str:
        lines = [f"== {self.name} suite ({self.total} examples) =="]
        for key, value in self.aggregates.items():
            if isinstance(value, ConfusionMatrix):
                lines.append(f"{key}:")
                lines.extend(_format_matrix(value))
            elif isinstance(value, float):
                lines.append(f"{key}: {value:.4f}")
            else:
                lines.append(f"{key}: {value}")
        for slice_name, rows in self.slices.items():
            lines.append("")
            lines.append(f"-- by {slice_name} --")
            if rows:
                headers = list(rows[0].keys())
                widths = [
                    max(len(str(h)), *(len(_fmt(r[h])) for r in rows)) for h in headers
                ]
                lines.append("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
                for r in rows:
                    lines.append("  ".join(_fmt(r[h]).ljust(w) for h, w in zip(headers, widths)))
        if self.skipped:
            lines.append("")
            lines.append(f"skipped lines ({len(self.skipped)}):")
            lines.extend(f"  {s}" for s in self.skipped)
        return "\n".join(lines)


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def _format_matrix(matrix: ConfusionMatrix) -> list[str]:
    width = max(len(c) for c in matrix.classes) + 1
    header = " " * width + " ".join(c.rjust(width) for c in matrix.classes)
    lines = [header]
    for label, row in zip(matrix.classes, matrix.counts):
        lines.append(label.ljust(width) + " ".join(str(v).rjust(width) for v in row))
    return lines


def load_jsonl(path: str | Path) -> tuple[list[dict[str, Any]], list[str]]:
    examples: list[dict[str, Any]] = []
    skipped: list[str] = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            record = json.loads(line)
            if not isinstance(record, dict):
                raise ValueError("record must be an object")
            examples.append(record)
        except (json.JSONDecodeError, ValueError) as exc:
            skipped.append(f"line {lineno}: {exc}")
    return examples, skipped


def _slice_rows(buckets: dict[Any, dict[str, int]]) -> list[dict[str, Any]]:
    rows = []
    for key in sorted(buckets, key=str):
        b = buckets[key]
        rows.append(
            {
                "slice": key,
                "total": b["total"],
                "correct": b["correct"],
                "accuracy": b["correct"] / b["total"] if b["total"] else 0.0,
            }
        )
    return rows


def _bump(buckets: dict[Any, dict[str, int]], key: Any, correct: bool) -> None:
    bucket = buckets.setdefault(key, {"total": 0, "correct": 0})
    bucket["total"] += 1
    bucket["correct"] += int(correct)


# ---------------------------------------------------------------------------
# DA suite


def run_da_suite(dataset_path: str | Path, system: Any) -> MetricReport:
    """Per example: generate SQL for the question, execute both it and the
    gold SQL, and score dataset equivalence. Breakdowns follow the keyword
    pattern, the six keyword categories, and the join count of the gold SQL."""
    examples, skipped = load_jsonl(dataset_path)
    store = system.store
    agent = system.da_agent
    correct_total = 0
    by_pattern: dict[Any, dict[str, int]] = {}
    by_category: dict[Any, dict[str, int]] = {}
    by_joins: dict[Any, dict[str, int]] = {}
    reasons: dict[str, int] = {}
    for ex in examples:
        gold_sql = ex["gold_sql"]
        order_sensitive = bool(ex.get("order_sensitive", False))
        pattern = ex.get("pattern_tag", "(untagged)")
        profile = sql_complexity_profile(gold_sql)
        gold_dataset = store.execute(gold_sql)
        correct = False
        reason = None
        try:
            sql, _attempts = generate_and_repair(
                ex["question"], store.catalog, store, agent.gateway, agent.backend_id,
                agent.max_repair_attempts, agent.instructions,
            )
            candidate = store.execute(sql)
            verdict = dataset_equivalent(gold_dataset, candidate, order_sensitive)
            correct = verdict.correct
            reason = verdict.reason
        except SqlGenerationError:
            reason = "generation_failed"
        except Exception as exc:  # noqa: BLE001 - example failures must not abort the suite
            reason = f"error: {exc}"
        correct_total += int(correct)
        if reason:
            reasons[reason] = reasons.get(reason, 0) + 1
        _bump(by_pattern, pattern, correct)
        for category in sorted(profile.categories):
            _bump(by_category, category, correct)
        _bump(by_joins, profile.join_count, correct)
    return MetricReport(
        name="da",
        total=len(examples),
        aggregates={
            "correct": correct_total,
            "accuracy": correct_total / len(examples) if examples else 0.0,
            "failure_reasons": reasons,
        },
        slices={
            "keyword_pattern": _slice_rows(by_pattern),
            "category": _slice_rows(by_category),
            "join_count": _slice_rows(by_joins),
        },
        skipped=skipped,
    )


# ---------------------------------------------------------------------------
# Routing suite


def run_routing_suite(dataset_path: str | Path, system: Any) -> MetricReport:
    examples, skipped = load_jsonl(dataset_path)
    cases = []
    keyword_hits = 0
    keyword_total = 0
    for i, ex in enumerate(examples):
        history = MessageHistory(session_id=f"routing-{i}")
        try:
            result = system.query_processor.handle_query(history, ex["question"])
            predicted = result.routing_class
            answer_text = result.answer.content
        except Exception:  # noqa: BLE001
            predicted = "NONE"
            answer_text = ""
        cases.append({"expected_class": ex["expected_class"], "predicted_class": predicted})
        keywords = ex.get("expected_answer_keywords") or []
        if keywords:
            keyword_total += 1
            lowered = answer_text.lower()
            keyword_hits += int(all(k.lower() in lowered for k in keywords))
    scores = routing_eval(cases)
    aggregates: dict[str, Any] = {
        "macro_f1": scores["macro_f1"],
        "confusion_matrix": scores["confusion_matrix"],
    }
    if keyword_total:
        aggregates["synthesis_keyword_accuracy"] = keyword_hits / keyword_total
    per_class_rows = [
        {"slice": label, **{k: v for k, v in stats.items()}}
        for label, stats in scores["per_class"].items()
    ]
    return MetricReport(
        name="routing",
        total=len(examples),
        aggregates=aggregates,
        slices={"class": per_class_rows},
        skipped=skipped,
    )


# ---------------------------------------------------------------------------
# IR suite


def run_ir_suite(dataset_path: str | Path, system: Any) -> MetricReport:
    examples, skipped = load_jsonl(dataset_path)
    agent = system.ir_agent
    r1_scores, rl_scores = [], []
    runs_by_modality: dict[str, list[dict[str, Any]]] = {}
    for ex in examples:
        try:
            envelope = agent.answer(ex["question"])
        except Exception as exc:  # noqa: BLE001
            skipped.append(f"question {ex.get('question', '?')!r}: {exc}")
            continue
        reference = ex.get("reference_answer", "")
        if reference:
            r1_scores.append(rouge1(envelope["text"], reference))
            rl_scores.append(rougeL(envelope["text"], reference))
        relevant = ex.get("relevant_ids") or []
        if relevant:
            modality = ex.get("modality", "text")
            runs_by_modality.setdefault(modality, []).append(
                {"ranked": envelope.get("provenance", []), "relevant": relevant}
            )
    aggregates: dict[str, Any] = {}
    if r1_scores:
        aggregates["rouge1"] = {
            "precision": float(np.mean([s.precision for s in r1_scores])),
            "recall": float(np.mean([s.recall for s in r1_scores])),
            "f1": float(np.mean([s.f1 for s in r1_scores])),
        }
        aggregates["rougeL"] = {
            "precision": float(np.mean([s.precision for s in rl_scores])),
            "recall": float(np.mean([s.recall for s in rl_scores])),
            "f1": float(np.mean([s.f1 for s in rl_scores])),
        }
    modality_rows = []
    for modality, runs in sorted(runs_by_modality.items()):
        scores = retrieval_metrics(runs, k=2)
        modality_rows.append(
            {
                "slice": modality,
                "runs": scores["runs"],
                "top1_accuracy": scores["top1_accuracy"],
                "map_at_2": scores["map_at_k"],
            }
        )
    return MetricReport(
        name="ir",
        total=len(examples),
        aggregates=aggregates,
        slices={"modality": modality_rows},
        skipped=skipped,
    )


# ---------------------------------------------------------------------------
# PA suites


def run_pa_interp_suite(dataset_path: str | Path, system: Any) -> MetricReport:
    examples, skipped = load_jsonl(dataset_path)
    catalog = system.pa_agent.bundle.catalog
    gateway = system.pa_agent.gateway
    backend_id = system.pa_agent.backend_id
    field_hits = {name: 0 for name in FIELD_NAMES}
    exact = 0
    for ex in examples:
        gold = ex["gold"]
        try:
            request = interpret_query(ex["question"], gateway, backend_id, catalog)
            values = {
                "science_domain": request.science_domain,
                "node_count": request.node_count,
                "walltime_seconds": request.walltime_seconds,
                "utilization": request.utilization,
                "output_feature": request.output_feature,
            }
        except InterpretationError:
            values = {name: None for name in FIELD_NAMES}
        ok_all = True
        for name in FIELD_NAMES:
            got, want = values[name], gold.get(name)
            if name in ("node_count",):
                match = got is not None and want is not None and int(got) == int(want)
            elif name in ("walltime_seconds",):
                match = got is not None and want is not None and float(got) == float(want)
            else:
                match = got is not None and want is not None and str(got).lower() == str(want).lower()
            field_hits[name] += int(match)
            ok_all = ok_all and match
        exact += int(ok_all)
    total = len(examples)
    field_rows = [
        {"slice": name, "total": total, "correct": field_hits[name],
         "accuracy": field_hits[name] / total if total else 0.0}
        for name in FIELD_NAMES
    ]
    return MetricReport(
        name="pa_interp",
        total=total,
        aggregates={"exact_accuracy": exact / total if total else 0.0},
        slices={"field": field_rows},
        skipped=skipped,
    )


def run_pa_regress_suite(dataset_path: str | Path, system: Any) -> MetricReport:
    """Score the selected model per feature on the bundle's validation split,
    with RMSE breakdowns per utilization and per science domain."""
    from ..prediction import load_training_rows

    bundle = system.pa_bundle
    rows = load_training_rows(dataset_path)
    rng = np.random.default_rng(bundle.config.seed)
    order = rng.permutation(len(rows))
    n_val = max(1, int(len(rows) * bundle.config.validation_fraction))
    val_rows = [rows[i] for i in order[:n_val].tolist()]

    feature_rows = []
    by_util: dict[Any, list[float]] = {}
    by_domain: dict[Any, list[float]] = {}
    for key, fm in bundle.features.items():
        X = bundle.encoder.encode_rows(val_rows)
        truths = np.asarray([float(r[key]) for r in val_rows])
        if fm.chosen == "mlp":
            raw = fm.mlp.predict(X) * fm.target_std + fm.target_mean
        else:
            raw = fm.tree.predict(X)
        preds = np.expm1(raw) if fm.log_space else raw
        errors = regression_errors(preds.tolist(), truths.tolist())
        feature_rows.append(
            {
                "slice": key,
                "model": fm.chosen,
                "mae": errors["mae"],
                "rmse": errors["rmse"],
                "mape": errors["mape"],
            }
        )
        for r, p, t in zip(val_rows, preds, truths):
            by_util.setdefault((key, r["utilization"]), []).append((p - t) ** 2)
            by_domain.setdefault((key, r["domain"]), []).append((p - t) ** 2)

    util_rows = [
        {"slice": f"{key}/{util}", "rmse": float(np.sqrt(np.mean(sq)))}
        for (key, util), sq in sorted(by_util.items())
    ]
    domain_rows = [
        {"slice": f"{key}/{domain}", "rmse": float(np.sqrt(np.mean(sq)))}
        for (key, domain), sq in sorted(by_domain.items())
    ]
    return MetricReport(
        name="pa_regress",
        total=len(val_rows),
        aggregates={"features_scored": len(feature_rows)},
        slices={"feature": feature_rows, "utilization": util_rows, "domain": domain_rows},
        skipped=[],
    )


# ---------------------------------------------------------------------------
# Cost suite


def run_cost_suite(dataset_path: str | Path | None, system: Any) -> MetricReport:
    """Cost accounting from the live ledger, or from a ledger records file
    when a path is given."""
    from ..gateway import UsageLedger

    if dataset_path:
        records = json.loads(Path(dataset_path).read_text(encoding="utf-8"))
        ledger = UsageLedger.from_records(records)
    else:
        ledger = system.gateway.ledger
    report = cost_report(ledger, system.gateway.configs)
    backend_rows = [
        {"slice": backend_id, **{k: v for k, v in stats.items()}}
        for backend_id, stats in sorted(report["backends"].items())
    ]
    ratio_rows = [
        {"slice": pair, "input": stats["input"], "output": stats["output"]}
        for pair, stats in sorted(report["ratios"].items())
    ]
    return MetricReport(
        name="cost",
        total=len(ledger.entries),
        aggregates={},
        slices={"backend": backend_rows, "ratio": ratio_rows},
        skipped=[],
    )


_RUNNERS: dict[str, Callable[[Any, Any], MetricReport]] = {
    "ir": run_ir_suite,
    "da": run_da_suite,
    "pa_interp": run_pa_interp_suite,
    "pa_regress": run_pa_regress_suite,
    "routing": run_routing_suite,
    "cost": run_cost_suite,
}


def run_suite(kind: str, dataset_path: str | Path | None, system: Any) -> MetricReport:
    if kind not in _RUNNERS:
        raise ValueError(f"unknown suite {kind!r}; expected one of {SUITE_KINDS}")
    return _RUNNERS[kind](dataset_path, system)
