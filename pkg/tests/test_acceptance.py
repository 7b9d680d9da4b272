"""Acceptance criteria, one test per criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line per
criterion; any assertion failure surfaces as a pytest failure for that
criterion.
"""

import json
import time

import numpy as np
import pytest

from odagents.analytics import DAAgent, generate_and_repair
from odagents.conversation import MessageHistory, Role
from odagents.evaluation import (
    cost_report,
    regression_errors,
    retrieval_metrics,
    rouge1,
    rougeL,
    routing_eval,
    run_suite,
)
from odagents.evaluation.equivalence import brute_force_equivalent, dataset_equivalent
from odagents.gateway import BackendConfig, Usage, UsageLedger
from odagents.mlp import MLPRegressor
from odagents.prediction import TrainingConfig, train
from odagents.retrieval import DocumentChunk, HashEmbedder, VectorIndex, hybrid_search, ingest_corpus
from odagents.service import PlatformRuntime
from odagents.tree import RegressionTree

from conftest import ROUTING_EXAMPLES
from test_equivalence import derived_candidate, random_dataset
from test_prediction import make_rows
from test_retrieval import brute_force_ranking

TOL = 1e-9


def passed(name):
    print(f"\nACCEPTANCE {name}: PASS")


def test_dataset_equivalence_oracle_agreement():
    """200 seeded random gold/candidate pairs match the brute-force oracle."""
    started = time.monotonic()
    agreements = 0
    for seed in range(200):
        rng = np.random.default_rng(1000 + seed)
        n_rows = int(rng.integers(0, 6))
        n_cols = int(rng.integers(1, 5))
        gold = random_dataset(rng, n_rows, n_cols)
        cand = derived_candidate(rng, gold) if rng.integers(2) else random_dataset(
            rng, n_rows if rng.integers(2) else int(rng.integers(0, 6)), n_cols
        )
        order_sensitive = bool(rng.integers(2))
        fast = dataset_equivalent(gold, cand, order_sensitive)
        slow = brute_force_equivalent(gold, cand, order_sensitive)
        assert fast.correct == slow.correct, f"seed {seed}"
        agreements += 1
    elapsed = time.monotonic() - started
    assert agreements == 200
    assert elapsed < 10.0, f"oracle check took {elapsed:.2f}s"
    passed(f"dataset-equivalence oracle 200/200 in {elapsed:.2f}s")


def test_metric_hand_value_suite():
    r1 = rouge1("the cat sat", "the cat")
    assert abs(r1.precision - 2 / 3) < TOL
    assert abs(r1.recall - 1.0) < TOL
    assert abs(r1.f1 - 0.8) < TOL

    rl = rougeL("a b c d", "a c b d")
    assert abs(rl.f1 - 0.75) < TOL

    retrieval = retrieval_metrics([{"ranked": ["x", "a"], "relevant": ["a"]}], k=2)
    assert abs(retrieval["map_at_k"] - 0.5) < TOL

    regression = regression_errors([2.0, 3.0], [1.0, 2.0])
    assert abs(regression["mae"] - 1.0) < TOL
    assert abs(regression["rmse"] - 1.0) < TOL
    assert abs(regression["mape"] - 0.75) < TOL

    cases = [
        {"expected_class": "RAG", "predicted_class": "RAG"},
        {"expected_class": "RAG", "predicted_class": "SQL"},
        {"expected_class": "SQL", "predicted_class": "SQL"},
        {"expected_class": "SQL", "predicted_class": "SQL"},
    ]
    macro = routing_eval(cases)["macro_f1"]
    assert abs(macro - (2 / 3 + 0.8) / 2) < TOL
    passed("metric hand-value suite (1e-9)")


def run_routing_conversations(platform_dir):
    from odagents.config import load_config

    runtime = PlatformRuntime(load_config(platform_dir / "config.yaml"))
    cases = []
    streams = []
    for i, example in enumerate(ROUTING_EXAMPLES):
        events = []
        result = runtime.query_processor.handle_query(
            MessageHistory(session_id=f"accept-{i}"),
            example["question"],
            on_event=events.append,
        )
        cases.append(
            {"expected_class": example["expected_class"], "predicted_class": result.routing_class}
        )
        streams.append(json.dumps(events, sort_keys=True, default=str))
    return cases, streams


def test_scripted_end_to_end_routing(platform_dir):
    runs = [run_routing_conversations(platform_dir) for _ in range(3)]
    cases = runs[0][0]
    scores = routing_eval(cases)
    assert scores["macro_f1"] == 1.0
    assert scores["confusion_matrix"].is_diagonal()
    assert scores["confusion_matrix"].total() == 8
    assert runs[0][1] == runs[1][1] == runs[2][1], "trace event streams must be deterministic"
    passed("scripted end-to-end routing (diagonal, macro F1 1.0, 3x deterministic)")


def test_da_reflection_loop(runtime):
    prompts = []
    original = runtime.gateway.complete

    def spy(backend_id, req, session_id=""):
        prompts.append(req)
        return original(backend_id, req, session_id)

    runtime.gateway.complete = spy
    sql, attempts = generate_and_repair(
        "repair demo: node counts",
        runtime.store.catalog,
        runtime.store,
        runtime.gateway,
        "scripted-main",
        max_repair_attempts=3,
    )
    runtime.gateway.complete = original
    assert len(attempts) <= 3
    assert not attempts[0].validation.ok
    assert attempts[-1].validation.ok
    assert sql == "SELECT node_count FROM jobs"

    # The repair request's last user message carries the validation error verbatim.
    error_line = attempts[0].validation.error_lines()[0]
    repair_request = prompts[-1]
    repair_text = [m.content for m in repair_request.messages if m.role is Role.USER][-1]
    assert error_line in repair_text

    agent = DAAgent(runtime.store, runtime.gateway, "scripted-main")
    envelope = agent.answer("repair demo: node counts")
    assert envelope["attachments"][0]["body"]["sql"] == sql
    passed("DA reflection loop (repair <= 3 attempts, verbatim error, final SQL attached)")


def test_cost_arithmetic():
    ledger = UsageLedger()
    ledger.record("premium", Usage(1_000_000, 0))
    ledger.record("hosted", Usage(1_000_000, 0))
    configs = {
        "premium": BackendConfig(
            "premium", "http", endpoint="http://a", model_name="m",
            price_per_input_token=2.5e-6, price_per_output_token=1.0e-5,
        ),
        "hosted": BackendConfig(
            "hosted", "http", endpoint="http://b", model_name="m",
            price_per_input_token=3.0e-7, price_per_output_token=6.1e-7,
        ),
    }
    report = cost_report(ledger, configs)
    assert report["backends"]["premium"]["input_cost"] == pytest.approx(2.50, abs=1e-9)
    ratio = report["ratios"]["premium/hosted"]["input"]
    assert ratio == pytest.approx(8.33, abs=0.01)
    passed(f"cost arithmetic ($2.50 per 1M tokens; input ratio {ratio:.2f} = 8.33 +/- 0.01)")


def test_pa_numerics():
    # Gradient check against central differences, 5 seeds, rel. err < 1e-4.
    for seed in range(5):
        rng = np.random.default_rng(seed)
        model = MLPRegressor(input_dim=3, hidden=(4, 3), seed=seed)
        X, y = rng.normal(size=(6, 3)), rng.normal(size=6)
        _, analytic = model.flat_grads(X, y)
        params = model.get_params()
        numeric = np.zeros_like(params)
        h = 1e-6
        for i in range(len(params)):
            for sign, slot in ((+1, 0), (-1, 1)):
                bumped = params.copy()
                bumped[i] += sign * h
                model.set_params(bumped)
                loss, _, _ = model.loss_and_grads(X, y)
                if slot == 0:
                    up = loss
                else:
                    numeric[i] = (up - loss) / (2 * h)
            model.set_params(params)
        rel = np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
        assert rel.max() < 1e-4, f"seed {seed}: {rel.max():.2e}"

    # Tree exact on piecewise-constant data: MAPE = 0.
    rng = np.random.default_rng(42)
    X = np.column_stack([rng.integers(0, 2, 200), rng.normal(size=200)])
    y = np.where(X[:, 0] > 0.5, 512.0, 128.0)
    tree = RegressionTree(max_depth=8, min_leaf=20).fit(X, y)
    errors = regression_errors(tree.predict(X).tolist(), y.tolist())
    assert errors["mape"] == 0.0

    # Selection invariant on 3 synthetic features.
    rng = np.random.default_rng(6)

    def targets(row):
        return {
            "node_power_max": 100.0 if row["utilization"] == "CPU" else 400.0,
            "node_temp_max": 30.0 + 2.0 * np.log1p(row["node_count"]),
            "total_node_energy": 500.0 * row["node_count"] * row["walltime_seconds"],
        }

    bundle = train(make_rows(300, targets, rng), TrainingConfig(seed=2, mlp_epochs=60))
    for key, fm in bundle.features.items():
        chosen = fm.val_rmse_tree if fm.chosen == "tree" else fm.val_rmse_mlp
        other = fm.val_rmse_mlp if fm.chosen == "tree" else fm.val_rmse_tree
        assert chosen <= other, key

    # Error-metric formulas reproduced on fixture predictions.
    fixture = regression_errors([10.0, 8.0, 6.0, 5.0], [8.0, 8.0, 8.0, 4.0])
    assert abs(fixture["mae"] - 1.25) < TOL
    assert abs(fixture["rmse"] - 1.5) < TOL
    assert abs(fixture["mape"] - 0.1875) < TOL
    passed("PA numerics (gradients, exact tree, selection invariant, error formulas)")


WORDS = (
    "gpu power node energy cooling temperature scheduler queue filesystem quota network "
    "interconnect memory cabinet rack telemetry job batch walltime utilization domain"
).split()


def test_ir_oracle_and_idempotence(tmp_path, runtime):
    # hybrid_search equals brute-force scoring on a 50-chunk corpus, 20 queries.
    rng = np.random.default_rng(99)
    embedder = HashEmbedder()
    index = VectorIndex(dimension=embedder.dimension)
    for i in range(50):
        terms = rng.choice(WORDS, size=6, replace=True)
        descriptor = " ".join(terms)
        sparse = {}
        for t in terms:
            sparse[t] = sparse.get(t, 0) + 1
        index.add(
            DocumentChunk(
                chunk_id=f"k{i:03d}",
                source_doc="synthetic",
                modality="text",
                descriptor_text=descriptor,
                embedding=embedder.embed([descriptor])[0],
                sparse_terms=sparse,
            )
        )
    for q in range(20):
        query = " ".join(rng.choice(WORDS, size=3, replace=False))
        got = [r.chunk.chunk_id for r in hybrid_search(index, query, embedder, k=50)]
        assert got == brute_force_ranking(index, query, embedder, alpha=0.5), f"query {q}"

    # Re-ingestion idempotence: zero index diffs.
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / "doc.md").write_text("GPU node power draw and cooling notes.", encoding="utf-8")
    (corpus / "t.csv").write_text("a,b\n1,2\n", encoding="utf-8")
    (corpus / "t.csv.desc").write_text("small table", encoding="utf-8")
    first, _ = ingest_corpus(corpus, HashEmbedder())
    second, _ = ingest_corpus(corpus, HashEmbedder())
    assert first.to_dict() == second.to_dict()

    # Table-attachment propagation through the retrieval agent.
    envelope = runtime.ir_agent.answer("Show the per-node power draw table")
    tables = [a for a in envelope["attachments"] if a["kind"] == "table"]
    assert len(tables) == 1
    assert tables[0]["body"]["columns"] == ["node", "watts"]
    passed("IR oracle (50 chunks x 20 queries), idempotent re-ingestion, table propagation")


def test_report_format_parity(runtime, platform_dir):
    report = run_suite("da", platform_dir / "eval" / "da.jsonl", runtime)
    pattern_rows = report.slices["keyword_pattern"]
    assert pattern_rows, "keyword-pattern table must not be empty"
    for row in pattern_rows:
        assert {"slice", "total", "correct"} <= set(row)
    assert "category" in report.slices and report.slices["category"]
    assert "join_count" in report.slices and report.slices["join_count"]
    rendered = report.format_table()
    assert "keyword_pattern" in rendered and "total" in rendered and "correct" in rendered
    passed("report-format parity (pattern/total/correct + category + join-count)")
