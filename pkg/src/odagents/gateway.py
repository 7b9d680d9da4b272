"""Uniform chat-completion interface over two backends.

The scripted backend replays canned rules from a line-delimited script file
and is fully deterministic, which is what makes every agent pipeline in this
package testable offline. The HTTP backend speaks the widely deployed
chat-completions wire shape, so any compatible endpoint can stand in as the
hosted model. Both record token usage in a shared ledger.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import Any

import httpx

from .conversation import (
    Message,
    Role,
    TokenEstimator,
    ToolCall,
    estimate_tokens,
    render_message,
)


class GatewayError(Exception):
    pass


class RetryableError(GatewayError):
    """Network-level failure; the caller may retry."""


class ScriptError(GatewayError):
    """Malformed script file or no rule matched the input."""


class FinishReason(str, Enum):
    STOP = "stop"
    TOOL_CALLS = "tool_calls"
    LENGTH = "length"
    ERROR = "error"


@dataclass(frozen=True)
class ToolSchema:
    name: str
    description: str
    parameters: dict[str, Any]


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    tool_schemas: tuple[ToolSchema, ...] = ()
    temperature: float = 0.0
    max_output_tokens: int = 1024
    # Optional tag identifying which agent issued the request; script rules
    # may key on it so one script file can serve several agents.
    agent: str | None = None

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        names = [t.name for t in self.tool_schemas]
        if len(names) != len(set(names)):
            raise ValueError("tool names must be unique")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")


@dataclass(frozen=True)
class Usage:
    input_tokens: int
    output_tokens: int

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("usage counts must be >= 0")


@dataclass(frozen=True)
class ChatResponse:
    message: Message
    usage: Usage
    finish_reason: FinishReason

    def __post_init__(self) -> None:
        if (self.finish_reason is FinishReason.TOOL_CALLS) != bool(self.message.tool_calls):
            raise ValueError("finish_reason=tool_calls iff the message carries tool calls")


@dataclass(frozen=True)
class BackendConfig:
    backend_id: str
    kind: str  # "http" | "scripted"
    endpoint: str | None = None
    model_name: str | None = None
    script_path: str | None = None
    price_per_input_token: float = 0.0
    price_per_output_token: float = 0.0
    api_key_env: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("http", "scripted"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.price_per_input_token < 0 or self.price_per_output_token < 0:
            raise ValueError("prices must be >= 0")
        if self.kind == "http" and not (self.endpoint and self.model_name):
            raise ValueError("http backend requires endpoint and model_name")


@dataclass(frozen=True)
class LedgerEntry:
    backend_id: str
    input_tokens: int
    output_tokens: int
    timestamp: float
    session_id: str


class UsageLedger:
    """Append-only record of per-backend token usage. Appends are serialized
    internally so concurrent sessions can share one ledger."""

    def __init__(self) -> None:
        self._entries: list[LedgerEntry] = []
        self._lock = threading.Lock()

    def record(self, backend_id: str, usage: Usage, session_id: str = "") -> None:
        entry = LedgerEntry(backend_id, usage.input_tokens, usage.output_tokens, time.time(), session_id)
        with self._lock:
            self._entries.append(entry)

    @property
    def entries(self) -> tuple[LedgerEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    def to_records(self) -> list[dict[str, Any]]:
        return [
            {
                "backend_id": e.backend_id,
                "input_tokens": e.input_tokens,
                "output_tokens": e.output_tokens,
                "timestamp": e.timestamp,
                "session_id": e.session_id,
            }
            for e in self.entries
        ]

    @classmethod
    def from_records(cls, records: list[dict[str, Any]]) -> "UsageLedger":
        ledger = cls()
        for r in records:
            ledger._entries.append(
                LedgerEntry(
                    r["backend_id"],
                    int(r["input_tokens"]),
                    int(r["output_tokens"]),
                    float(r.get("timestamp", 0.0)),
                    r.get("session_id", ""),
                )
            )
        return ledger


def ledger_totals(ledger: UsageLedger, backend_id: str | None = None) -> Usage:
    inp = out = 0
    for e in ledger.entries:
        if backend_id is not None and e.backend_id != backend_id:
            continue
        inp += e.input_tokens
        out += e.output_tokens
    return Usage(inp, out)


@dataclass(frozen=True)
class ScriptRule:
    """One canned response. Rules are evaluated in file order; the first rule
    whose substrings all occur in the last user/tool message (and whose agent
    tag matches, when present) wins. A rule with no constraints is the
    catch-all every script must end with."""

    contains: tuple[str, ...] = ()
    agent: str | None = None
    text: str = ""
    tool_calls: tuple[dict[str, Any], ...] = ()

    def is_catch_all(self) -> bool:
        return not self.contains and self.agent is None

    def matches(self, probe_text: str, agent: str | None) -> bool:
        if self.agent is not None and self.agent != agent:
            return False
        return all(s in probe_text for s in self.contains)


def load_script(path: str) -> list[ScriptRule]:
    """Parse a line-delimited script file into ordered rules.

    Each line is a JSON record ``{"match": {"contains": [...], "agent": ...},
    "response": {"text": ..., "tool_calls": [...]}}``. The final rule must be
    a catch-all (empty match).
    """
    rules: list[ScriptRule] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                record = json.loads(line)
                match = record.get("match", {})
                response = record["response"]
                contains = match.get("contains", [])
                if isinstance(contains, str):
                    contains = [contains]
                rules.append(
                    ScriptRule(
                        contains=tuple(contains),
                        agent=match.get("agent"),
                        text=response.get("text", ""),
                        tool_calls=tuple(response.get("tool_calls", [])),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as exc:
                raise ScriptError(f"{path}: parse error at line {lineno}: {exc}") from exc
    if not rules or not rules[-1].is_catch_all():
        raise ScriptError(f"{path}: script must end with a catch-all rule")
    return rules


def _probe_text(req: ChatRequest) -> str:
    for msg in reversed(req.messages):
        if msg.role in (Role.USER, Role.TOOL):
            return render_message(msg)
    return render_message(req.messages[-1])


class ScriptedBackend:
    """Deterministic backend replaying :class:`ScriptRule` lists.

    Rule state is read-only after load; auto-generated tool-call ids are
    derived from the rule index and conversation length, so identical request
    sequences yield byte-identical response sequences.
    """

    def __init__(self, rules: list[ScriptRule], estimator: TokenEstimator = estimate_tokens) -> None:
        self._rules = list(rules)
        self._estimate = estimator

    @classmethod
    def from_file(cls, path: str) -> "ScriptedBackend":
        return cls(load_script(path))

    def complete(self, req: ChatRequest) -> ChatResponse:
        probe = _probe_text(req)
        for idx, rule in enumerate(self._rules):
            if rule.matches(probe, req.agent):
                return self._respond(idx, rule, req)
        raise ScriptError(f"no script rule matched input: {probe[:200]!r}")

    def _respond(self, rule_idx: int, rule: ScriptRule, req: ChatRequest) -> ChatResponse:
        calls = []
        for pos, spec in enumerate(rule.tool_calls):
            call_id = spec.get("id") or f"call_{rule_idx}_{len(req.messages)}_{pos}"
            calls.append(ToolCall(id=call_id, tool_name=spec["tool_name"], arguments=dict(spec.get("arguments", {}))))
        message = Message(Role.ASSISTANT, rule.text, tool_calls=tuple(calls))
        input_tokens = sum(self._estimate(render_message(m)) for m in req.messages)
        output_tokens = self._estimate(rule.text) + sum(
            self._estimate(json.dumps(c.arguments, sort_keys=True)) for c in calls
        )
        finish = FinishReason.TOOL_CALLS if calls else FinishReason.STOP
        return ChatResponse(message, Usage(input_tokens, output_tokens), finish)


def _message_to_wire(msg: Message) -> dict[str, Any]:
    if msg.role is Role.TOOL and msg.tool_result is not None:
        payload = msg.tool_result.payload
        content = payload if isinstance(payload, str) else json.dumps(payload, sort_keys=True)
        return {"role": "tool", "tool_call_id": msg.tool_result.call_id, "content": content}
    wire: dict[str, Any] = {"role": msg.role.value, "content": msg.content}
    if msg.tool_calls:
        wire["tool_calls"] = [
            {
                "id": c.id,
                "type": "function",
                "function": {"name": c.tool_name, "arguments": json.dumps(c.arguments)},
            }
            for c in msg.tool_calls
        ]
    return wire


def _message_from_wire(data: dict[str, Any]) -> Message:
    calls = []
    for c in data.get("tool_calls") or []:
        fn = c.get("function", {})
        raw_args = fn.get("arguments", "{}")
        args = json.loads(raw_args) if isinstance(raw_args, str) else dict(raw_args)
        calls.append(ToolCall(id=c["id"], tool_name=fn["name"], arguments=args))
    return Message(Role.ASSISTANT, data.get("content") or "", tool_calls=tuple(calls))


class HttpBackend:
    """Chat-completions client for a remote endpoint.

    ``endpoint`` is the full URL of the completions resource. Credentials come
    from the environment variable named in the config, never from the config
    file itself. Retryable failures are retried at most twice with exponential
    backoff before surfacing to the agent loop.
    """

    max_retries = 2
    backoff_base_s = 0.5

    def __init__(self, cfg: BackendConfig, client: httpx.Client | None = None) -> None:
        self.cfg = cfg
        self._client = client or httpx.Client(timeout=60.0)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key_env:
            key = os.environ.get(self.cfg.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, req: ChatRequest) -> ChatResponse:
        body: dict[str, Any] = {
            "model": self.cfg.model_name,
            "messages": [_message_to_wire(m) for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        if req.tool_schemas:
            body["tools"] = [
                {
                    "type": "function",
                    "function": {"name": t.name, "description": t.description, "parameters": t.parameters},
                }
                for t in req.tool_schemas
            ]
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = self._client.post(self.cfg.endpoint, json=body, headers=self._headers())
                if resp.status_code >= 500:
                    raise RetryableError(f"server error {resp.status_code}")
                resp.raise_for_status()
                return self._parse(resp.json())
            except (httpx.TransportError, httpx.TimeoutException, RetryableError) as exc:
                last_exc = exc
                if attempt < self.max_retries:
                    time.sleep(self.backoff_base_s * (2**attempt))
            except httpx.HTTPStatusError as exc:
                raise GatewayError(f"backend {self.cfg.backend_id}: {exc}") from exc
        raise RetryableError(f"backend {self.cfg.backend_id} unreachable: {last_exc}") from last_exc

    def _parse(self, data: dict[str, Any]) -> ChatResponse:
        choice = data["choices"][0]
        message = _message_from_wire(choice["message"])
        usage = data.get("usage", {})
        reported = Usage(int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))
        raw_reason = choice.get("finish_reason", "stop")
        if message.tool_calls:
            finish = FinishReason.TOOL_CALLS
        elif raw_reason == "length":
            finish = FinishReason.LENGTH
        else:
            finish = FinishReason.STOP
        return ChatResponse(message, reported, finish)


class ModelGateway:
    """Routes completion requests to configured backends and records usage."""

    def __init__(self, ledger: UsageLedger | None = None) -> None:
        self._configs: dict[str, BackendConfig] = {}
        self._impls: dict[str, Any] = {}
        self.ledger = ledger or UsageLedger()

    def register(self, cfg: BackendConfig, impl: Any | None = None) -> None:
        if impl is None:
            if cfg.kind == "scripted":
                if not cfg.script_path:
                    raise ValueError("scripted backend requires script_path")
                impl = ScriptedBackend.from_file(cfg.script_path)
            else:
                impl = HttpBackend(cfg)
        self._configs[cfg.backend_id] = cfg
        self._impls[cfg.backend_id] = impl

    def config(self, backend_id: str) -> BackendConfig:
        return self._configs[backend_id]

    @property
    def configs(self) -> dict[str, BackendConfig]:
        return dict(self._configs)

    def complete(self, backend_id: str, req: ChatRequest, session_id: str = "") -> ChatResponse:
        if backend_id not in self._impls:
            raise GatewayError(f"unknown backend {backend_id!r}")
        response = self._impls[backend_id].complete(req)
        self.ledger.record(backend_id, response.usage, session_id)
        return response
