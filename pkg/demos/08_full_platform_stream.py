"""
The whole platform, one streamed query
======================================

Builds a complete deployment in a temp directory: synthetic telemetry, an
ingested corpus, a trained model bundle, a script file for every agent, and
the platform config. Then it replays one analytical query through the session
service and prints the server-sent events a browser client would receive.
"""

import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from conftest import build_platform  # reuses the full scripted deployment

from odagents.config import load_config
from odagents.service import PlatformRuntime, create_app, parse_sse

root = Path(tempfile.mkdtemp(prefix="platform-demo-"))
config_path = build_platform(root)
config = load_config(config_path)
config.validate_for_startup()
runtime = PlatformRuntime(config)

from fastapi.testclient import TestClient

client = TestClient(create_app(runtime))
session_id = client.post("/api/sessions").json()["session_id"]
print("session:", session_id)

response = client.post(f"/api/sessions/{session_id}/messages",
                       json={"text": "How many jobs ran in total?"})
for event in parse_sse(response.text):
    payload = str(event["payload"])
    print(f"  [{event['seq']:02d}] {event['event']:13s} {payload[:90]}")

print("\nledger totals:")
for entry in runtime.gateway.ledger.to_records()[:3]:
    print("  ", entry["backend_id"], entry["input_tokens"], "in /", entry["output_tokens"], "out")
