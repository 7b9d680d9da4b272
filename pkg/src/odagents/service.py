"""Session HTTP service with server-sent-event streaming, plus the runtime
object that wires every component together from a platform config.

The interaction model is request -> streamed response: posting a message to
a session yields an SSE stream of step/tool events ending in exactly one
terminal ``final`` or ``error`` event. Sessions are persisted as append-only
line-delimited files under the configured data directory.
"""

from __future__ import annotations

import itertools
import json
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Iterator

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from .analytics import DAAgent, TelemetryStore
from .config import PlatformConfig
from .conversation import MessageHistory
from .gateway import ModelGateway
from .prediction import ModelBundle, PAAgent
from .retrieval import HashEmbedder, IRAgent, VectorIndex
from .router import QueryProcessor, make_subagent_binding
from .runtime import AgentConfig

STREAM_EVENT_KINDS = (
    "step_started",
    "tool_call",
    "tool_result",
    "sql_generated",
    "dataset",
    "prediction",
    "final",
    "error",
)

TOOL_DESCRIPTIONS = {
    "ir_lookup": "Search the documentation knowledge base (text, tables, figures).",
    "da_query": "Answer analytical questions over recorded job telemetry with SQL.",
    "pa_predict": "Estimate power, temperature or energy for a hypothetical job.",
}


def default_qp_prompt() -> str:
    return resources.files("odagents").joinpath("prompts/qp_system.txt").read_text(encoding="utf-8")


@dataclass
class Session:
    session_id: str
    history: MessageHistory
    traces: list[list[dict[str, Any]]] = field(default_factory=list)
    created_at: float = field(default_factory=time.time)
    lock: threading.Lock = field(default_factory=threading.Lock)
    persisted_messages: int = 0


class PlatformRuntime:
    """Builds the gateway, agents, and session store from a config."""

    def __init__(self, config: PlatformConfig) -> None:
        self.config = config
        self.gateway = ModelGateway()
        for backend in config.backends:
            resolved = backend
            if backend.kind == "scripted" and backend.script_path:
                script = Path(backend.script_path)
                if not script.is_absolute():
                    resolved = replace(backend, script_path=str(config.base_dir / script))
            self.gateway.register(resolved)

        self.store: TelemetryStore | None = None
        self.da_agent: DAAgent | None = None
        manifest = config.path("store_manifest")
        if manifest is not None:
            self.store = TelemetryStore.from_manifest(manifest)
            self.da_agent = DAAgent(self.store, self.gateway, config.backend_for("da"))

        self.embedder = HashEmbedder()
        self.ir_agent: IRAgent | None = None
        index_path = config.path("index")
        if index_path is not None and Path(index_path).exists():
            index = VectorIndex.load(index_path)
            self.ir_agent = IRAgent(index, self.embedder, self.gateway, config.backend_for("ir.generate"))

        self.pa_bundle: ModelBundle | None = None
        self.pa_agent: PAAgent | None = None
        bundle_path = config.path("model_bundle")
        if bundle_path is not None and Path(bundle_path).exists():
            self.pa_bundle = ModelBundle.load(bundle_path)
            self.pa_agent = PAAgent(self.pa_bundle, self.gateway, config.backend_for("pa.interpret"))

        tools = []
        if self.ir_agent is not None:
            tools.append(make_subagent_binding("ir_lookup", TOOL_DESCRIPTIONS["ir_lookup"], self.ir_agent))
        if self.da_agent is not None:
            tools.append(make_subagent_binding("da_query", TOOL_DESCRIPTIONS["da_query"], self.da_agent))
        if self.pa_agent is not None:
            tools.append(make_subagent_binding("pa_predict", TOOL_DESCRIPTIONS["pa_predict"], self.pa_agent))
        self.query_processor = QueryProcessor(
            self.gateway,
            tools,
            AgentConfig(
                backend_id=config.backend_for("qp"),
                system_prompt=self._qp_prompt(),
                agent_tag="qp",
            ),
        )

        self.sessions: dict[str, Session] = {}
        self._sessions_lock = threading.Lock()
        self.sessions_dir = config.path("sessions_dir")
        if self.sessions_dir is not None:
            Path(self.sessions_dir).mkdir(parents=True, exist_ok=True)

    def _qp_prompt(self) -> str:
        prompts_dir = self.config.path("prompts_dir")
        if prompts_dir is not None:
            candidate = Path(prompts_dir) / "qp_system.txt"
            if candidate.exists():
                return candidate.read_text(encoding="utf-8")
        return default_qp_prompt()

    # -- sessions ------------------------------------------------------------

    def create_session(self) -> Session:
        session_id = uuid.uuid4().hex
        session = Session(session_id=session_id, history=MessageHistory(session_id=session_id))
        with self._sessions_lock:
            self.sessions[session_id] = session
        if self.sessions_dir is not None:
            path = Path(self.sessions_dir) / f"{session_id}.jsonl"
            path.write_text(json.dumps({"session_id": session_id}, sort_keys=True) + "\n", encoding="utf-8")
        return session

    def get_session(self, session_id: str) -> Session | None:
        with self._sessions_lock:
            return self.sessions.get(session_id)

    def commit_turn(self, session: Session, history: MessageHistory, events: list[dict[str, Any]]) -> None:
        session.history = history
        session.traces.append(events)
        if self.sessions_dir is None:
            return
        path = Path(self.sessions_dir) / f"{session.session_id}.jsonl"
        with path.open("a", encoding="utf-8") as fh:
            for msg in history.messages[session.persisted_messages:]:
                fh.write(json.dumps(msg.to_dict(), sort_keys=True) + "\n")
        session.persisted_messages = len(history.messages)


def _derived_events(tool_result_payload: Any) -> list[tuple[str, Any]]:
    """sql_generated / dataset / prediction events carried by a tool result."""
    events: list[tuple[str, Any]] = []
    if not isinstance(tool_result_payload, dict):
        return events
    for att in tool_result_payload.get("attachments", []):
        if not isinstance(att, dict):
            continue
        if att.get("kind") == "sql_text":
            events.append(("sql_generated", att.get("body", {})))
        elif att.get("kind") == "table":
            events.append(("dataset", att.get("body", {})))
    if "prediction" in tool_result_payload:
        events.append(("prediction", tool_result_payload["prediction"]))
    return events


def stream_query(runtime: PlatformRuntime, session: Session, text: str) -> Iterator[str]:
    """Run one query in a worker thread and yield SSE frames as events arrive.

    Event sequence numbers increase strictly; the stream always ends with a
    single terminal ``final`` or ``error`` event, including when a sub-agent
    crashes mid-response.
    """
    out: "queue.Queue[tuple[str, Any] | None]" = queue.Queue()

    def emit(kind: str, payload: Any) -> None:
        out.put((kind, payload))

    def on_loop_event(event: dict[str, Any]) -> None:
        emit(event["kind"], event["payload"])
        if event["kind"] == "tool_result" and not event["payload"].get("is_error"):
            for kind, payload in _derived_events(event["payload"].get("payload")):
                emit(kind, payload)

    def work() -> None:
        with session.lock:  # a second message to the same session queues here
            try:
                result = runtime.query_processor.handle_query(session.history, text, on_event=on_loop_event)
                final_payload = {
                    "text": result.answer.content,
                    "attachments": [a.to_dict() for a in result.answer.attachments],
                    "routing_class": result.routing_class,
                }
                events = result.trace.to_events()
                runtime.commit_turn(session, result.history, events)
                emit("final", final_payload)
            except Exception as exc:  # noqa: BLE001 - must yield a terminal event, not drop the stream
                emit("error", {"code": "agent_failure", "message": str(exc)})
            finally:
                out.put(None)

    threading.Thread(target=work, daemon=True).start()
    seq = itertools.count(1)
    while True:
        item = out.get()
        if item is None:
            break
        kind, payload = item
        data = json.dumps({"seq": next(seq), "payload": payload}, sort_keys=True)
        yield f"event: {kind}\ndata: {data}\n\n"


class MessageBody(BaseModel):
    text: str


def create_app(runtime: PlatformRuntime) -> FastAPI:
    app = FastAPI(title="odagents", version="0.1.0")
    # Desk-scale tool without auth (by design); let the chat UI connect from
    # any origin, including file:// pages.
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.get("/api/health")
    def health() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/api/sessions")
    def create_session() -> dict[str, str]:
        session = runtime.create_session()
        return {"session_id": session.session_id}

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        session = runtime.get_session(session_id)
        if session is None:
            return _not_found(session_id)
        return {
            "session_id": session.session_id,
            "created_at": session.created_at,
            "messages": [m.to_dict() for m in session.history.messages],
            "traces": session.traces,
        }

    @app.post("/api/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody):
        session = runtime.get_session(session_id)
        if session is None:
            return _not_found(session_id)
        return StreamingResponse(
            stream_query(runtime, session, body.text), media_type="text/event-stream"
        )

    return app


def _not_found(session_id: str) -> JSONResponse:
    return JSONResponse(
        status_code=404,
        content={"code": "unknown_session", "message": f"no session {session_id!r}"},
    )


def serve(config: PlatformConfig) -> None:
    """Validate the config, build the runtime, and run the HTTP service."""
    import uvicorn

    config.validate_for_startup()
    runtime = PlatformRuntime(config)
    app = create_app(runtime)
    uvicorn.run(app, host=config.service.host, port=config.service.port)


def parse_sse(text: str) -> list[dict[str, Any]]:
    """Parse an SSE body into ``{"event", "seq", "payload"}`` records; used by
    the eval harness and tests to replay recorded streams."""
    events: list[dict[str, Any]] = []
    current_event: str | None = None
    for line in text.splitlines():
        if line.startswith("event: "):
            current_event = line[len("event: "):]
        elif line.startswith("data: ") and current_event is not None:
            data = json.loads(line[len("data: "):])
            events.append({"event": current_event, "seq": data["seq"], "payload": data["payload"]})
            current_event = None
    return events
