"""
Hierarchical routing over three specialized agents
==================================================

The coordinator loop sees three tools: knowledge lookup, SQL analytics, and
telemetry prediction. Which subset it invokes for a query defines the query's
routing class, one of eight labels, and that is exactly what the routing
evaluation scores.
"""

from odagents import MessageHistory, ModelGateway, BackendConfig, ScriptedBackend, AgentConfig
from odagents.evaluation import routing_eval
from odagents.gateway import ScriptRule
from odagents.router import QueryProcessor, make_subagent_binding


class CannedAgent:
    def __init__(self, text):
        self.text = text

    def answer(self, question, context=""):
        return {"text": self.text, "attachments": []}


rules = [
    ScriptRule(contains=("hello",), text="Hi! What would you like to analyze?"),
    ScriptRule(
        contains=("idle power and the job count",),
        tool_calls=(
            {"tool_name": "ir_lookup", "arguments": {"question": "idle power"}},
            {"tool_name": "da_query", "arguments": {"question": "job count"}},
        ),
    ),
    ScriptRule(contains=("counted 1234",), text="Idle power is 75 W and 1234 jobs ran."),
    ScriptRule(text="fallback"),
]

gateway = ModelGateway()
gateway.register(BackendConfig("demo", "scripted", script_path="inline"), impl=ScriptedBackend(rules))

qp = QueryProcessor(
    gateway,
    [
        make_subagent_binding("ir_lookup", "docs", CannedAgent("idle power is 75 W")),
        make_subagent_binding("da_query", "sql", CannedAgent("counted 1234 jobs")),
        make_subagent_binding("pa_predict", "prediction", CannedAgent("estimate: 2 GJ")),
    ],
    AgentConfig(backend_id="demo", system_prompt="delegate wisely", agent_tag=None),
)

for question in ("hello there", "give me the idle power and the job count"):
    result = qp.handle_query(MessageHistory("demo"), question)
    print(f"{question!r:45s} -> class {result.routing_class}: {result.answer.content}")

# The evaluation harness turns (expected, predicted) pairs into a confusion
# matrix and macro F1 over the eight classes.
cases = [
    {"expected_class": "NONE", "predicted_class": "NONE"},
    {"expected_class": "RAG+SQL", "predicted_class": "RAG+SQL"},
    {"expected_class": "PRD", "predicted_class": "SQL"},
]
scores = routing_eval(cases)
print("\nmacro F1 =", round(scores["macro_f1"], 4))
for label, stats in scores["per_class"].items():
    print(f"  {label:8s} precision={stats['precision']:.2f} recall={stats['recall']:.2f} f1={stats['f1']:.2f}")
