"""
Telemetry prediction from natural language
==========================================

The prediction agent first turns a question into a structured request (the
scripted backend stands in for the interpreter model), fills anything missing
with the most frequent training values, and then answers from one of two
model families trained from scratch: a small feedforward network and a
regression tree. The better family is chosen per output feature on
validation RMSE.
"""

import tempfile
from pathlib import Path

from odagents.gateway import BackendConfig, ModelGateway, ScriptedBackend, ScriptRule
from odagents.prediction import (
    TrainingConfig,
    interpret_query,
    load_training_rows,
    predict,
    train,
)
from odagents.synth import domain_descriptions, synth_telemetry

data_dir = Path(tempfile.mkdtemp(prefix="prediction-demo-"))
synth_telemetry(seed=7, n_jobs=400, out_dir=data_dir)
rows = load_training_rows(data_dir / "pa_training.csv")

bundle = train(rows, TrainingConfig(seed=7, mlp_epochs=60), domain_descriptions())
print("per-feature model selection (validation RMSE):")
for key, sel in list(bundle.selection().items())[:6]:
    print(f"  {key:22s} -> {sel['chosen']:4s} (mlp {sel['val_rmse_mlp']:.3g}, tree {sel['val_rmse_tree']:.3g})")
print("  ...")

rules = [
    ScriptRule(
        agent="pa.interpret",
        contains=("total amount of energy",),
        text='{"science_domain": "CFD", "node_count": 1000, "walltime_seconds": 7200,'
        ' "utilization": null, "output_feature": "total_node_energy"}',
    ),
    ScriptRule(text="{}"),
]
gateway = ModelGateway()
gateway.register(BackendConfig("demo", "scripted", script_path="inline"), impl=ScriptedBackend(rules))

question = (
    "Estimate the total amount of energy consumed by a job that runs on 1,000 "
    "compute-nodes, belongs to the computational fluid science domain, and runs for 2 hours"
)
request = interpret_query(question, gateway, "demo", bundle.catalog)
print("\nstructured request:")
print("  domain:", request.science_domain)
print("  nodes:", request.node_count)
print("  walltime:", request.walltime_seconds, "s")
print("  utilization:", request.utilization, "(defaulted)" if "utilization" in request.filled_defaults else "")
print("  feature:", request.output_feature)

outcome = predict(request, bundle)
print(f"\nprediction: {outcome['value']:.4g} {outcome['units']} [{outcome['model_kind']}]")
