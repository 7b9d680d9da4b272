"""
Text-to-SQL with an agentic reflection loop
===========================================

The analytics agent composes a schema-aware prompt, asks the model for SQL,
and validates the result in three stages: parse, resolve against the catalog,
and a dry run against the store. When validation fails, the errors are
appended to the conversation verbatim and the model tries again, up to a
bounded number of attempts. Here the scripted backend deliberately emits a
bad column name first.
"""

import tempfile
from pathlib import Path

from odagents.analytics import generate_and_repair, sql_complexity_profile, TelemetryStore
from odagents.gateway import BackendConfig, ModelGateway, ScriptedBackend, ScriptRule
from odagents.synth import synth_telemetry

data_dir = Path(tempfile.mkdtemp(prefix="sql-demo-"))
synth_telemetry(seed=7, n_jobs=150, out_dir=data_dir)
store = TelemetryStore.from_manifest(data_dir / "catalog.json")

rules = [
    # After the validation error is echoed back, produce the correct query.
    ScriptRule(agent=None, contains=("unknown column 'gpu_watts'",),
               text="SELECT domain, AVG(node_count) AS avg_nodes FROM jobs GROUP BY domain"),
    ScriptRule(contains=("average node count",), text="SELECT domain, AVG(gpu_watts) FROM jobs GROUP BY domain"),
    ScriptRule(text="SELECT 1"),
]
gateway = ModelGateway()
gateway.register(BackendConfig("demo", "scripted", script_path="inline"), impl=ScriptedBackend(rules))

sql, attempts = generate_and_repair(
    "What is the average node count per science domain?",
    store.catalog,
    store,
    gateway,
    "demo",
)
for a in attempts:
    status = "valid" if a.validation.ok else "; ".join(a.validation.error_lines())
    print(f"attempt {a.attempt_index}: {a.sql_text!r} -> {status}")

dataset = store.execute(sql)
print(f"\nexecuted: {len(dataset.rows)} rows x {len(dataset.columns)} columns")
for row in dataset.rows[:5]:
    print("  ", row)

profile = sql_complexity_profile(sql)
print("\ncomplexity profile:")
print("  keywords:", sorted(profile.keywords))
print("  joins:", profile.join_count)
print("  categories:", sorted(profile.categories))
