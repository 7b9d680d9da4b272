"""Shared fixture: a complete scripted platform built once per test session.

Synthesizes telemetry, ingests a small documentation corpus, trains a quick
model bundle, and writes one script file that drives the coordinator and all
three sub-agents deterministically, plus the JSONL evaluation datasets.
"""

import json
from pathlib import Path

import pytest

from odagents.config import load_config
from odagents.prediction import TrainingConfig, load_training_rows, train
from odagents.retrieval import HashEmbedder, ingest_corpus, normalized_table_hash
from odagents.synth import domain_descriptions, synth_telemetry

POWER_TABLE = ("node,watts\n" "n1,410\n" "n2,395\n")


def rule(agent=None, contains=(), text="", tool_calls=()):
    match = {}
    if agent:
        match["agent"] = agent
    if contains:
        match["contains"] = list(contains)
    response = {}
    if text:
        response["text"] = text
    if tool_calls:
        response["tool_calls"] = list(tool_calls)
    return json.dumps({"match": match, "response": response})


def call(tool_name, question, context=None):
    arguments = {"question": question}
    if context:
        arguments["context"] = context
    return {"tool_name": tool_name, "arguments": arguments}


QP_RULES = [
    # NONE: greeting handled without delegation
    rule("qp", ["Hello there"], text="Hi! Ask me about jobs, power, or the docs."),
    # RAG: single lookup
    rule("qp", ["What is the idle GPU power"], tool_calls=[call("ir_lookup", "idle GPU power")]),
    rule("qp", ["Idle GPU power is about"], text="The docs say idle GPU power is about 75 W."),
    # SQL: single analytical query
    rule("qp", ["How many jobs ran in total"], tool_calls=[call("da_query", "How many jobs ran in total?")]),
    rule("qp", ["COUNT(*) AS n FROM jobs"], text="I counted the recorded jobs; see the table."),
    # PRD: single prediction
    rule(
        "qp",
        ["Estimate the mean node power"],
        tool_calls=[call("pa_predict", "Estimate the mean node power for a CFD job on 64 GPU nodes for one hour")],
    ),
    rule("qp", ['"output_feature": "node_power_mean"'], text="Here is the mean node power estimate."),
    # RAG+SQL: sequential lookup then filter (two steps)
    rule(
        "qp",
        ["How many jobs exceeded the idle GPU draw"],
        tool_calls=[call("ir_lookup", "idle GPU power threshold for counting")],
    ),
    rule(
        "qp",
        ["counting threshold is 75 W"],
        tool_calls=[call("da_query", "count telemetry rows above the idle threshold")],
    ),
    rule("qp", ["AS above_threshold"], text="Combined the documented threshold with the telemetry count."),
    # RAG+PRD: lookup plus prediction in one step
    rule(
        "qp",
        ["walltime policy and the expected peak temperature"],
        tool_calls=[
            call("ir_lookup", "documented max walltime policy"),
            call("pa_predict", "Estimate the maximum node temperature for a Physics job on 16 CPU nodes for two hours"),
        ],
    ),
    rule("qp", ['"output_feature": "node_temp_max"'], text="Policy plus the temperature estimate attached."),
    # SQL+PRD
    rule(
        "qp",
        ["per-domain job counts and a total energy estimate"],
        tool_calls=[
            call("da_query", "How many jobs per domain?"),
            call("pa_predict", "Estimate the total energy of a CFD job on 128 GPU nodes for one hour"),
        ],
    ),
    rule("qp", ['"output_feature": "total_node_energy"'], text="Counts per domain plus the energy estimate."),
    # RAG+SQL+PRD
    rule(
        "qp",
        ["docs, the job count, and a peak GPU power estimate"],
        tool_calls=[
            call("ir_lookup", "idle GPU power"),
            call("da_query", "How many jobs ran in total?"),
            call("pa_predict", "Estimate the peak GPU power for a CFD job on 32 GPU nodes for one hour"),
        ],
    ),
    rule("qp", ['"output_feature": "gpu_power_max"'], text="Docs, count, and the GPU power estimate together."),
    # DA repair demonstration (drives the reflection loop end to end)
    rule(
        "qp",
        ["demonstrate the repair loop"],
        tool_calls=[call("da_query", "repair demo: node counts")],
    ),
    rule("qp", ["SELECT node_count FROM jobs"], text="The repaired query ran fine."),
]

DA_RULES = [
    rule("da", ["How many jobs ran in total"], text="SELECT COUNT(*) AS n FROM jobs"),
    rule("da", ["How many jobs per domain"], text="SELECT domain, COUNT(*) AS n FROM jobs GROUP BY domain"),
    rule(
        "da",
        ["Top 3 jobs by node count"],
        text="SELECT job_id AS j FROM jobs ORDER BY node_count DESC, job_id ASC LIMIT 3",
    ),
    rule(
        "da",
        ["Average node power per domain for GPU jobs"],
        text=(
            "SELECT jobs.domain AS d, AVG(node_telemetry.avg_node_power_w) AS p FROM jobs "
            "JOIN node_telemetry ON jobs.job_id = node_telemetry.job_id "
            "WHERE jobs.utilization = 'GPU' GROUP BY jobs.domain"
        ),
    ),
    rule(
        "da",
        ["count telemetry rows above the idle threshold"],
        text="SELECT COUNT(*) AS above_threshold FROM node_telemetry WHERE avg_gpu_power_w > 75",
    ),
    # Reflection pair: invalid column first, then the corrected query once the
    # validation error is echoed back.
    rule("da", ["unknown column 'nodez'"], text="SELECT node_count FROM jobs"),
    rule("da", ["repair demo"], text="SELECT nodez FROM jobs"),
]

IR_RULES = [
    rule("ir.decompose", text=""),  # empty -> fall back to the original query
    rule("ir.generate", ["threshold for counting"], text="The counting threshold is 75 W."),
    rule("ir.generate", ["idle GPU power"], text="Idle GPU power is about 75 W per device."),
    rule("ir.generate", ["max walltime"], text="The documented maximum walltime is 24 hours."),
    rule("ir.generate", ["per-node power draw"], text="The table lists per-node power draw in watts."),
    rule("ir.generate", text="Documentation excerpt provided."),
]


def pa_json(domain, nodes, wall, util, feature):
    return json.dumps(
        {
            "science_domain": domain,
            "node_count": nodes,
            "walltime_seconds": wall,
            "utilization": util,
            "output_feature": feature,
        }
    )


PA_RULES = [
    rule("pa.interpret", ["mean node power"], text=pa_json("CFD", 64, 3600, "GPU", "node_power_mean")),
    rule(
        "pa.interpret",
        ["maximum node temperature"],
        text=pa_json("Physics", 16, 7200, "CPU", "node_temp_max"),
    ),
    rule("pa.interpret", ["total energy"], text=pa_json("CFD", 128, 3600, "GPU", "total_node_energy")),
    rule("pa.interpret", ["peak GPU power"], text=pa_json("CFD", 32, 3600, "GPU", "gpu_power_max")),
    rule(
        "pa.interpret",
        ["2 hours on 1000 nodes"],
        text=pa_json("CFD", 1000, 7200, None, "total_node_energy"),
    ),
]

ROUTING_EXAMPLES = [
    {"question": "Hello there!", "expected_class": "NONE"},
    {
        "question": "What is the idle GPU power according to the docs?",
        "expected_class": "RAG",
        "expected_answer_keywords": ["75"],
    },
    {"question": "How many jobs ran in total?", "expected_class": "SQL"},
    {
        "question": "Estimate the mean node power for a CFD job on 64 GPU nodes running one hour",
        "expected_class": "PRD",
    },
    {"question": "How many jobs exceeded the idle GPU draw?", "expected_class": "RAG+SQL"},
    {
        "question": "Summarize the walltime policy and the expected peak temperature for a Physics job",
        "expected_class": "RAG+PRD",
    },
    {
        "question": "Give me per-domain job counts and a total energy estimate for a big CFD job",
        "expected_class": "SQL+PRD",
    },
    {
        "question": "Check the docs, the job count, and a peak GPU power estimate for CFD",
        "expected_class": "RAG+SQL+PRD",
    },
]

DA_EXAMPLES = [
    {
        "question": "How many jobs ran in total?",
        "gold_sql": "SELECT COUNT(*) FROM jobs",
        "order_sensitive": False,
        "pattern_tag": "COUNT",
    },
    {
        "question": "How many jobs per domain?",
        "gold_sql": "SELECT domain, COUNT(*) FROM jobs GROUP BY domain",
        "order_sensitive": False,
        "pattern_tag": "COUNT, GROUP BY",
    },
    {
        "question": "Top 3 jobs by node count?",
        "gold_sql": "SELECT job_id FROM jobs ORDER BY node_count DESC, job_id ASC LIMIT 3",
        "order_sensitive": True,
        "pattern_tag": "WHERE, ORDER BY, LIMIT",
    },
    {
        "question": "Average node power per domain for GPU jobs?",
        "gold_sql": (
            "SELECT jobs.domain, AVG(node_telemetry.avg_node_power_w) FROM jobs "
            "JOIN node_telemetry ON jobs.job_id = node_telemetry.job_id "
            "WHERE jobs.utilization = 'GPU' GROUP BY jobs.domain"
        ),
        "order_sensitive": False,
        "pattern_tag": "AVG, JOIN, WHERE, GROUP BY",
    },
]

PA_INTERP_EXAMPLES = [
    {
        "question": "Estimate the mean node power for a CFD job on 64 GPU nodes for one hour",
        "gold": {
            "science_domain": "CFD",
            "node_count": 64,
            "walltime_seconds": 3600,
            "utilization": "GPU",
            "output_feature": "node_power_mean",
        },
    },
    {
        "question": "What is the maximum node temperature of a Physics job, 16 CPU nodes, two hours?",
        "gold": {
            "science_domain": "Physics",
            "node_count": 16,
            "walltime_seconds": 7200,
            "utilization": "CPU",
            "output_feature": "node_temp_max",
        },
    },
    {
        "question": "Total energy for a CFD run of 2 hours on 1000 nodes?",
        "gold": {
            "science_domain": "CFD",
            "node_count": 1000,
            "walltime_seconds": 7200,
            "utilization": "GPU",  # modal value fills the unspecified utilization
            "output_feature": "total_node_energy",
        },
    },
]


def build_platform(root: Path) -> Path:
    data_dir = root / "data"
    synth_telemetry(seed=7, n_jobs=200, out_dir=data_dir)

    corpus = root / "corpus"
    corpus.mkdir()
    (corpus / "guide.md").write_text(
        "Idle GPU power is approximately 75 W per device.\n\n"
        "Under full load a GPU node can draw up to 560 W.\n\n"
        "The documented maximum walltime is 24 hours for batch jobs.",
        encoding="utf-8",
    )
    (corpus / "power.csv").write_text(POWER_TABLE, encoding="utf-8")
    (corpus / "power.csv.desc").write_text(
        "Table of per-node power draw in watts", encoding="utf-8"
    )
    (corpus / "cooling.png").write_bytes(b"\x89PNG fake image bytes")
    (corpus / "cooling.png.caption").write_text(
        "Diagram of the liquid cooling loop", encoding="utf-8"
    )
    index_path = root / "index.json"
    index, _stats = ingest_corpus(corpus, HashEmbedder())
    index.save(index_path)

    rows = load_training_rows(data_dir / "pa_training.csv")
    bundle = train(rows, TrainingConfig(seed=7, mlp_epochs=8), domain_descriptions())
    for name in ("CFD", "Physics"):
        assert bundle.catalog.domain(name) is not None
    bundle_path = root / "bundle.json"
    bundle.save(bundle_path)

    script_path = root / "script.jsonl"
    lines = QP_RULES + DA_RULES + IR_RULES + PA_RULES
    lines.append(rule(text="scripted fallback answer"))
    script_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    eval_dir = root / "eval"
    eval_dir.mkdir()
    (eval_dir / "routing.jsonl").write_text(
        "\n".join(json.dumps(e) for e in ROUTING_EXAMPLES) + "\n", encoding="utf-8"
    )
    (eval_dir / "da.jsonl").write_text(
        "\n".join(json.dumps(e) for e in DA_EXAMPLES) + "\n", encoding="utf-8"
    )
    table_hash = normalized_table_hash(["node", "watts"], [["n1", "410"], ["n2", "395"]])
    ir_examples = [
        {
            "question": "What is the idle GPU power?",
            "reference_answer": "Idle GPU power is about 75 W per device.",
        },
        {
            "question": "Show the per-node power draw table",
            "reference_answer": "The table lists per-node power draw in watts.",
            "relevant_ids": [f"table:{table_hash[:16]}"],
            "modality": "table",
        },
    ]
    (eval_dir / "ir.jsonl").write_text(
        "\n".join(json.dumps(e) for e in ir_examples) + "\n", encoding="utf-8"
    )
    (eval_dir / "pa_interp.jsonl").write_text(
        "\n".join(json.dumps(e) for e in PA_INTERP_EXAMPLES) + "\n", encoding="utf-8"
    )

    config_path = root / "config.yaml"
    config_path.write_text(
        f"""
format_version: 1
backends:
  - backend_id: scripted-main
    kind: scripted
    script_path: script.jsonl
    price_per_input_token: 0.0000025
    price_per_output_token: 0.00001
agents:
  qp: scripted-main
  da: scripted-main
  ir.generate: scripted-main
  ir.decompose: scripted-main
  pa.interpret: scripted-main
paths:
  corpus: corpus
  index: index.json
  store_manifest: data/catalog.json
  model_bundle: bundle.json
  training_data: data/pa_training.csv
  sessions_dir: sessions
eval_datasets:
  routing: eval/routing.jsonl
  da: eval/da.jsonl
  ir: eval/ir.jsonl
  pa_interp: eval/pa_interp.jsonl
  pa_regress: data/pa_training.csv
service:
  host: 127.0.0.1
  port: 8077
""".lstrip(),
        encoding="utf-8",
    )
    return config_path


@pytest.fixture(scope="session")
def platform_dir(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("platform")
    build_platform(root)
    return root


@pytest.fixture
def runtime(platform_dir):
    from odagents.service import PlatformRuntime

    config = load_config(platform_dir / "config.yaml")
    config.validate_for_startup()
    return PlatformRuntime(config)
