"""
A deterministic conversation with the agent loop
=================================================

Everything in this platform runs on one substrate: an append-only message
history that a model-driven loop reads and extends. This demo wires the loop
to the scripted backend, so the "model" is a list of canned rules and every
run is reproducible.
"""

from odagents import (
    AgentConfig,
    BackendConfig,
    MessageHistory,
    ModelGateway,
    ScriptedBackend,
    ToolBinding,
    estimate_tokens,
    render_transcript,
    run_loop,
)
from odagents.conversation import user_message
from odagents.gateway import ScriptRule

# Token accounting uses a simple heuristic everywhere a backend does not
# report exact usage: alphanumeric runs and punctuation marks.
print("tokens('jobs > 100?') =", estimate_tokens("jobs > 100?"))

# A tool the model may call.
lookup = ToolBinding(
    name="lookup",
    description="Looks up a fact",
    parameters={"type": "object", "properties": {"question": {"type": "string"}}, "required": ["question"]},
    handler=lambda args: {"text": f"fact about {args['question']}: 42"},
)

# The scripted model: ask for the tool once, then answer from its result.
rules = [
    ScriptRule(contains=("meaning",), tool_calls=({"tool_name": "lookup", "arguments": {"question": "life"}},)),
    ScriptRule(contains=("fact about life",), text="The answer is 42."),
    ScriptRule(text="fallback"),
]

gateway = ModelGateway()
gateway.register(BackendConfig("demo", "scripted", script_path="inline"), impl=ScriptedBackend(rules))

history = MessageHistory("demo-session").append(user_message("What is the meaning of it all?"))
result = run_loop(history, [lookup], AgentConfig(backend_id="demo"), gateway)

print("\nfinal answer:", result.final.content)
print("tools invoked:", result.trace.delegated_tools)
print("\ntranscript:")
print(render_transcript(result.history, budget=10_000))

# The ledger recorded every model call.
totals = gateway.ledger.entries
print(f"\nledger: {len(totals)} completions recorded")
