"""Metrics and suite runners for every measurable pipeline in the platform."""

from .equivalence import EquivalenceVerdict, dataset_equivalent
from .metrics import (
    ConfusionMatrix,
    RougeScore,
    cost_report,
    likert_aggregate,
    regression_errors,
    retrieval_metrics,
    rouge1,
    rougeL,
    routing_eval,
)
from .suites import MetricReport, run_suite

__all__ = [
    "ConfusionMatrix",
    "EquivalenceVerdict",
    "MetricReport",
    "RougeScore",
    "cost_report",
    "dataset_equivalent",
    "likert_aggregate",
    "regression_errors",
    "retrieval_metrics",
    "rouge1",
    "rougeL",
    "routing_eval",
    "run_suite",
]
