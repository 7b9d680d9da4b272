"""Top-level query processing agent.

Binds the three sub-agents (knowledge retrieval, SQL analytics, telemetry
prediction) as tools of one model-driven loop, synthesizes their results into
a final answer, and exposes which sub-agents a query exercised as a routing
class for evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Protocol

from .conversation import (
    Attachment,
    Message,
    MessageHistory,
    Role,
    system_message,
    truncate_messages,
    user_message,
)
from .gateway import ChatRequest, ModelGateway, ToolSchema
from .runtime import AgentConfig, AgentTrace, LoopResult, ToolBinding, run_loop

ROUTING_CLASSES = ("NONE", "RAG", "SQL", "PRD", "RAG+SQL", "RAG+PRD", "SQL+PRD", "RAG+SQL+PRD")

SUB_AGENT_TOOLS = ("ir_lookup", "da_query", "pa_predict")

_TOOL_TAG = {"ir_lookup": "RAG", "da_query": "SQL", "pa_predict": "PRD"}
_TAG_ORDER = ("RAG", "SQL", "PRD")

SUB_AGENT_ARG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "properties": {
        "question": {"type": "string", "description": "The sub-task, phrased as a standalone question."},
        "context": {"type": "string", "description": "Optional context from earlier steps."},
    },
    "required": ["question"],
    "additionalProperties": False,
}


def classify_delegations(trace: AgentTrace) -> str:
    """Map the set of successfully invoked sub-agent tools to a routing class.

    Only successful invocations count; repeated calls to the same tool do not
    change the class, and invocation order never matters.
    """
    tags = {_TOOL_TAG[name] for name in trace.delegated_tools if name in _TOOL_TAG}
    if not tags:
        return "NONE"
    return "+".join(tag for tag in _TAG_ORDER if tag in tags)


class SubAgent(Protocol):
    def answer(self, question: str, context: str = "") -> dict[str, Any]: ...


def make_subagent_binding(name: str, description: str, agent: SubAgent) -> ToolBinding:
    """Wrap a sub-agent behind the shared delegation schema.

    The handler is stateless between calls; the returned envelope is
    ``{"text": str, "attachments": [attachment dicts]}``.
    """
    if name not in SUB_AGENT_TOOLS:
        raise ValueError(f"unknown sub-agent tool {name!r}")

    def handler(arguments: dict[str, Any]) -> dict[str, Any]:
        envelope = agent.answer(arguments["question"], context=arguments.get("context", ""))
        attachments = envelope.get("attachments", [])
        serialized = [a.to_dict() if isinstance(a, Attachment) else a for a in attachments]
        result = dict(envelope)
        result["attachments"] = serialized
        return result

    return ToolBinding(name=name, description=description, parameters=SUB_AGENT_ARG_SCHEMA, handler=handler)


@dataclass
class QueryResult:
    answer: Message
    trace: AgentTrace
    history: MessageHistory
    routing_class: str


class QueryProcessor:
    """Delegation and synthesis loop over the three sub-agent tools."""

    def __init__(
        self,
        gateway: ModelGateway,
        tools: list[ToolBinding],
        cfg: AgentConfig,
        transcript_budget: int = 6000,
    ) -> None:
        self.gateway = gateway
        self.tools = tools
        self.cfg = cfg
        self.transcript_budget = transcript_budget

    def synthesize_prompt(
        self, history: MessageHistory, schemas: tuple[ToolSchema, ...], cfg: AgentConfig | None = None
    ) -> ChatRequest:
        """Build the model request: system prompt describing the sub-agent
        tools plus the transcript, truncated to the configured token budget
        (system message and newest turns retained)."""
        cfg = cfg or self.cfg
        messages = list(history.messages)
        if not messages or messages[0].role is not Role.SYSTEM:
            messages = [system_message(cfg.system_prompt)] + messages
        retained = truncate_messages(messages, self.transcript_budget)
        return ChatRequest(tuple(retained), tool_schemas=schemas, agent=cfg.agent_tag)

    def handle_query(
        self,
        history: MessageHistory,
        user_text: str,
        on_event: Callable[[dict[str, Any]], None] | None = None,
    ) -> QueryResult:
        history = history.append(user_message(user_text))
        turn_start = len(history.messages)
        result: LoopResult = run_loop(
            history,
            self.tools,
            self.cfg,
            self.gateway,
            build_request=self.synthesize_prompt,
            on_event=on_event,
        )
        answer = self._finalize_answer(result, turn_start)
        # Replace the loop's last message so the stored history carries the
        # attachment-bearing final answer.
        final_history = MessageHistory(result.history.session_id, result.history.messages[:-1] + (answer,))
        return QueryResult(
            answer=answer,
            trace=result.trace,
            history=final_history,
            routing_class=classify_delegations(result.trace),
        )

    def _finalize_answer(self, result: LoopResult, turn_start: int) -> Message:
        attachments: list[Attachment] = []
        failures: list[tuple[str, str]] = []
        successes = 0
        for msg in result.history.messages[turn_start:]:
            if msg.role is not Role.TOOL or msg.tool_result is None:
                continue
            if msg.tool_result.is_error:
                failures.append((_tool_of(result, msg.tool_result.call_id), str(msg.tool_result.payload)))
            else:
                successes += 1
                attachments.extend(msg.attachments)
        text = result.final.content
        if failures and successes == 0:
            reasons = "\n".join(f"- {name}: {reason}" for name, reason in failures)
            notice = f"I could not complete the request; every delegation failed:\n{reasons}"
            text = f"{text}\n\n{notice}".strip()
        return Message(Role.ASSISTANT, text, attachments=tuple(attachments))


def _tool_of(result: LoopResult, call_id: str) -> str:
    for msg in result.history.messages:
        for call in msg.tool_calls:
            if call.id == call_id:
                return call.tool_name
    return "unknown"
