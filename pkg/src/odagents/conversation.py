"""Conversation data model shared by every agent.

Messages, tool calls, and attachments form the substrate that all agent
loops read from and append to. Histories are immutable values: ``append``
returns a new history and never touches the old one, so a history can be
shared read-only across threads while a single session owner extends it.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"
    TOOL = "tool"


class AttachmentKind(str, Enum):
    TABLE = "table"
    IMAGE_REF = "image_ref"
    PLOT_SPEC = "plot_spec"
    SQL_TEXT = "sql_text"


class HistoryError(ValueError):
    """A message violates the history invariants (e.g. dangling call_id)."""


@dataclass(frozen=True)
class Attachment:
    """Typed payload carried by a message.

    Bodies are kind-specific JSON-able dicts:

    * ``table``: ``{"columns": [...], "rows": [[...], ...]}``
    * ``image_ref``: ``{"uri": str, "caption": str}``
    * ``plot_spec``: ``{"chart": "line"|"bar", "x": str, "y": [str, ...]}``
    * ``sql_text``: ``{"sql": str}``
    """

    kind: AttachmentKind
    body: dict[str, Any]

    def __post_init__(self) -> None:
        if self.kind is AttachmentKind.TABLE:
            if "columns" not in self.body or "rows" not in self.body:
                raise ValueError("table attachment requires 'columns' and 'rows'")
        elif self.kind is AttachmentKind.PLOT_SPEC:
            if "chart" not in self.body or "x" not in self.body or "y" not in self.body:
                raise ValueError("plot_spec attachment requires 'chart', 'x' and 'y'")

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "body": self.body}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Attachment":
        return cls(kind=AttachmentKind(data["kind"]), body=dict(data["body"]))


def table_attachment(columns: Iterable[str], rows: Iterable[Iterable[Any]]) -> Attachment:
    return Attachment(
        AttachmentKind.TABLE,
        {"columns": list(columns), "rows": [list(r) for r in rows]},
    )


def sql_attachment(sql: str) -> Attachment:
    return Attachment(AttachmentKind.SQL_TEXT, {"sql": sql})


def image_attachment(uri: str, caption: str = "") -> Attachment:
    return Attachment(AttachmentKind.IMAGE_REF, {"uri": uri, "caption": caption})


@dataclass(frozen=True)
class ToolCall:
    id: str
    tool_name: str
    arguments: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.tool_name:
            raise ValueError("tool_name must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "tool_name": self.tool_name, "arguments": self.arguments}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ToolCall":
        return cls(id=data["id"], tool_name=data["tool_name"], arguments=dict(data.get("arguments", {})))


@dataclass(frozen=True)
class ToolResult:
    call_id: str
    payload: Any
    is_error: bool = False

    def __post_init__(self) -> None:
        if self.is_error and not (isinstance(self.payload, str) and self.payload.strip()):
            # Error payloads must carry a human-readable reason.
            if not (isinstance(self.payload, dict) and self.payload.get("error")):
                raise ValueError("error result requires a human-readable reason")

    def to_dict(self) -> dict[str, Any]:
        return {"call_id": self.call_id, "payload": self.payload, "is_error": self.is_error}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ToolResult":
        return cls(call_id=data["call_id"], payload=data["payload"], is_error=bool(data.get("is_error", False)))


@dataclass(frozen=True)
class Message:
    role: Role
    content: str = ""
    tool_calls: tuple[ToolCall, ...] = ()
    tool_result: ToolResult | None = None
    attachments: tuple[Attachment, ...] = ()

    def __post_init__(self) -> None:
        if self.tool_calls and self.role is not Role.ASSISTANT:
            raise ValueError("tool_calls are only allowed on assistant messages")
        if (self.tool_result is not None) != (self.role is Role.TOOL):
            raise ValueError("tool_result must be present exactly on tool messages")

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"role": self.role.value, "content": self.content}
        if self.tool_calls:
            data["tool_calls"] = [c.to_dict() for c in self.tool_calls]
        if self.tool_result is not None:
            data["tool_result"] = self.tool_result.to_dict()
        if self.attachments:
            data["attachments"] = [a.to_dict() for a in self.attachments]
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Message":
        return cls(
            role=Role(data["role"]),
            content=data.get("content", ""),
            tool_calls=tuple(ToolCall.from_dict(c) for c in data.get("tool_calls", [])),
            tool_result=ToolResult.from_dict(data["tool_result"]) if data.get("tool_result") else None,
            attachments=tuple(Attachment.from_dict(a) for a in data.get("attachments", [])),
        )


def user_message(text: str) -> Message:
    return Message(Role.USER, text)


def system_message(text: str) -> Message:
    return Message(Role.SYSTEM, text)


def assistant_message(text: str, tool_calls: Iterable[ToolCall] = ()) -> Message:
    return Message(Role.ASSISTANT, text, tool_calls=tuple(tool_calls))


def tool_message(result: ToolResult, attachments: Iterable[Attachment] = ()) -> Message:
    return Message(Role.TOOL, "", tool_result=result, attachments=tuple(attachments))


@dataclass(frozen=True)
class MessageHistory:
    """Append-only ordered conversation for one session."""

    session_id: str
    messages: tuple[Message, ...] = ()

    def append(self, msg: Message) -> "MessageHistory":
        if not self.messages and msg.role not in (Role.SYSTEM, Role.USER):
            raise HistoryError("first message must have role system or user")
        if msg.tool_result is not None:
            known = {c.id for m in self.messages for c in m.tool_calls}
            if msg.tool_result.call_id not in known:
                raise HistoryError(f"dangling call_id {msg.tool_result.call_id}")
        for call in msg.tool_calls:
            for prior in self.messages:
                if any(c.id == call.id for c in prior.tool_calls):
                    raise HistoryError(f"duplicate tool call id {call.id}")
        return MessageHistory(self.session_id, self.messages + (msg,))

    def extend(self, msgs: Iterable[Message]) -> "MessageHistory":
        h = self
        for m in msgs:
            h = h.append(m)
        return h

    def __len__(self) -> int:
        return len(self.messages)


_TOKEN_RE = re.compile(r"[A-Za-z0-9]+|[^A-Za-z0-9\s]")


def estimate_tokens(text: str) -> int:
    """Heuristic token count: after whitespace splitting, each maximal run of
    letters/digits and each punctuation character counts as one token.

    Backends that report exact usage override these estimates in ledgers.
    """
    return len(_TOKEN_RE.findall(text))


TokenEstimator = Callable[[str], int]


def render_table_block(columns: list[str], rows: list[list[Any]]) -> str:
    """Render a table as a pipe-delimited block, parseable by
    :func:`parse_table_block`. Pipe characters inside cells are escaped."""

    def cell(v: Any) -> str:
        return str(v).replace("|", "\\|")

    lines = [" | ".join(cell(c) for c in columns)]
    for row in rows:
        lines.append(" | ".join(cell(v) for v in row))
    return "\n".join(lines)


def parse_table_block(block: str) -> tuple[list[str], list[list[str]]]:
    def split(line: str) -> list[str]:
        parts = re.split(r"(?<!\\) \| ", line)
        return [p.replace("\\|", "|") for p in parts]

    lines = [ln for ln in block.splitlines() if ln.strip()]
    if not lines:
        return [], []
    columns = split(lines[0])
    rows = [split(ln) for ln in lines[1:]]
    return columns, rows


def render_message(msg: Message) -> str:
    """Deterministic single-message rendering used for transcripts and for
    token accounting by the scripted backend."""
    parts: list[str] = []
    if msg.role is Role.TOOL and msg.tool_result is not None:
        r = msg.tool_result
        tag = "error" if r.is_error else "result"
        payload = r.payload if isinstance(r.payload, str) else json.dumps(r.payload, sort_keys=True)
        parts.append(f"[tool {tag} for {r.call_id}] {payload}")
    else:
        parts.append(f"[{msg.role.value}] {msg.content}".rstrip())
    for call in msg.tool_calls:
        args = json.dumps(call.arguments, sort_keys=True)
        parts.append(f"[call {call.id}] {call.tool_name}({args})")
    for att in msg.attachments:
        if att.kind is AttachmentKind.TABLE:
            parts.append("[table]")
            parts.append(render_table_block(att.body["columns"], att.body["rows"]))
        elif att.kind is AttachmentKind.SQL_TEXT:
            parts.append("[sql]")
            parts.append(att.body["sql"])
        elif att.kind is AttachmentKind.IMAGE_REF:
            parts.append(f"[image] {att.body.get('uri', '')}: {att.body.get('caption', '')}".rstrip())
        else:
            parts.append(f"[{att.kind.value}] {json.dumps(att.body, sort_keys=True)}")
    return "\n".join(parts)


def truncate_messages(
    messages: tuple[Message, ...] | list[Message],
    budget: int,
    estimator: TokenEstimator = estimate_tokens,
) -> list[Message]:
    """Select the messages that fit within ``budget`` tokens.

    The leading system message is always retained; after that, messages are
    kept newest-first at whole-message granularity and returned in
    chronological order.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    msgs = list(messages)
    if not msgs:
        return []
    kept: list[Message] = []
    remaining = budget
    pool = msgs
    if msgs[0].role is Role.SYSTEM:
        kept.append(msgs[0])
        remaining -= estimator(render_message(msgs[0]))
        pool = msgs[1:]
    tail: list[Message] = []
    for msg in reversed(pool):
        cost = estimator(render_message(msg))
        if cost > remaining:
            break
        tail.append(msg)
        remaining -= cost
    return kept + tail[::-1]


def render_transcript(
    history: MessageHistory,
    budget: int,
    estimator: TokenEstimator = estimate_tokens,
) -> str:
    """Render a history as deterministic text, truncating to ``budget`` tokens
    while always retaining the system message and the newest turns."""
    retained = truncate_messages(history.messages, budget, estimator)
    return "\n".join(render_message(m) for m in retained)


def history_to_jsonl(history: MessageHistory) -> str:
    """Serialize a history as line-delimited JSON: one header record carrying
    the session id, then one record per message, in order."""
    lines = [json.dumps({"session_id": history.session_id}, sort_keys=True)]
    lines.extend(json.dumps(m.to_dict(), sort_keys=True) for m in history.messages)
    return "\n".join(lines) + "\n"


def history_from_jsonl(text: str) -> MessageHistory:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty history serialization")
    header = json.loads(lines[0])
    history = MessageHistory(session_id=header["session_id"])
    for ln in lines[1:]:
        history = history.append(Message.from_dict(json.loads(ln)))
    return history
