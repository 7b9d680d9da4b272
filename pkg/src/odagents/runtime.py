"""Generic agentic tool-calling loop.

One iteration = call the model, execute every tool it requested (in listed
order), append the results, repeat. The loop terminates on a final answer or
when the iteration budget runs out, in which case the partial answer is
labeled as incomplete rather than raised. Tool failures never crash the loop;
they become error results the model can see and recover from.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Callable

import jsonschema

from .conversation import (
    Attachment,
    Message,
    MessageHistory,
    Role,
    ToolCall,
    ToolResult,
    system_message,
    tool_message,
)
from .gateway import ChatRequest, FinishReason, ModelGateway, ToolSchema

ToolHandler = Callable[[dict[str, Any]], Any]

BUDGET_EXHAUSTED_NOTICE = "[incomplete] iteration budget exhausted before a final answer"


@dataclass(frozen=True)
class ToolBinding:
    name: str
    description: str
    parameters: dict[str, Any]
    handler: ToolHandler

    def schema(self) -> ToolSchema:
        return ToolSchema(self.name, self.description, self.parameters)


@dataclass(frozen=True)
class AgentConfig:
    backend_id: str
    system_prompt: str = ""
    max_iterations: int = 8
    agent_tag: str | None = None

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class ToolExecution:
    tool_name: str
    call_id: str
    duration_s: float
    is_error: bool
    error: str | None = None


@dataclass
class StepRecord:
    finish_reason: str
    response_text: str
    tool_executions: list[ToolExecution] = field(default_factory=list)


@dataclass
class AgentTrace:
    steps: list[StepRecord] = field(default_factory=list)
    delegated_tools: set[str] = field(default_factory=set)
    exhausted: bool = False

    def to_events(self) -> list[dict[str, Any]]:
        """Flatten the trace into ordered structured event records."""
        events: list[dict[str, Any]] = []
        for i, step in enumerate(self.steps):
            events.append({"kind": "step_started", "payload": {"step": i}})
            for ex in step.tool_executions:
                events.append(
                    {"kind": "tool_call", "payload": {"tool_name": ex.tool_name, "call_id": ex.call_id}}
                )
                events.append(
                    {
                        "kind": "tool_result",
                        "payload": {
                            "tool_name": ex.tool_name,
                            "call_id": ex.call_id,
                            "is_error": ex.is_error,
                            "error": ex.error,
                        },
                    }
                )
        return events


@dataclass
class LoopResult:
    final: Message
    trace: AgentTrace
    history: MessageHistory


def execute_tool(binding: ToolBinding, call: ToolCall) -> ToolResult:
    """Validate arguments against the binding schema, then run the handler.

    Schema violations and handler exceptions both come back as error results;
    the handler is never invoked with invalid arguments.
    """
    if call.tool_name != binding.name:
        raise ValueError(f"call {call.id} targets {call.tool_name!r}, bound tool is {binding.name!r}")
    try:
        jsonschema.validate(call.arguments, binding.parameters)
    except jsonschema.ValidationError as exc:
        return ToolResult(call.id, f"invalid arguments for {binding.name}: {exc.message}", is_error=True)
    try:
        payload = binding.handler(call.arguments)
    except Exception as exc:  # noqa: BLE001 - tool errors feed back into the loop
        return ToolResult(call.id, f"{binding.name} failed: {exc}", is_error=True)
    return ToolResult(call.id, payload)


RequestBuilder = Callable[[MessageHistory, tuple[ToolSchema, ...], AgentConfig], ChatRequest]


def default_request_builder(
    history: MessageHistory, schemas: tuple[ToolSchema, ...], cfg: AgentConfig
) -> ChatRequest:
    messages = list(history.messages)
    if cfg.system_prompt and (not messages or messages[0].role is not Role.SYSTEM):
        messages = [system_message(cfg.system_prompt)] + messages
    return ChatRequest(tuple(messages), tool_schemas=schemas, agent=cfg.agent_tag)


def _result_attachments(payload: Any) -> tuple[Attachment, ...]:
    if isinstance(payload, dict) and isinstance(payload.get("attachments"), list):
        try:
            return tuple(Attachment.from_dict(a) for a in payload["attachments"])
        except (KeyError, TypeError, ValueError):
            return ()
    return ()


def run_loop(
    history: MessageHistory,
    tools: list[ToolBinding],
    cfg: AgentConfig,
    gateway: ModelGateway,
    build_request: RequestBuilder = default_request_builder,
    on_event: Callable[[dict[str, Any]], None] | None = None,
) -> LoopResult:
    if not history.messages:
        raise ValueError("history must be non-empty")
    names = [t.name for t in tools]
    if len(names) != len(set(names)):
        raise ValueError("tool names must be unique")
    bindings = {t.name: t for t in tools}
    schemas = tuple(t.schema() for t in tools)

    emit = on_event or (lambda event: None)
    trace = AgentTrace()
    final: Message | None = None

    for step_idx in range(cfg.max_iterations):
        emit({"kind": "step_started", "payload": {"step": step_idx}})
        request = build_request(history, schemas, cfg)
        response = gateway.complete(cfg.backend_id, request, session_id=history.session_id)
        history = history.append(response.message)
        step = StepRecord(finish_reason=response.finish_reason.value, response_text=response.message.content)
        trace.steps.append(step)

        if response.finish_reason is not FinishReason.TOOL_CALLS:
            final = response.message
            break

        for call in response.message.tool_calls:
            emit({"kind": "tool_call", "payload": {"tool_name": call.tool_name, "call_id": call.id, "arguments": call.arguments}})
            started = time.perf_counter()
            binding = bindings.get(call.tool_name)
            if binding is None:
                result = ToolResult(call.id, f"unknown tool {call.tool_name!r}", is_error=True)
            else:
                result = execute_tool(binding, call)
            duration = time.perf_counter() - started
            step.tool_executions.append(
                ToolExecution(
                    tool_name=call.tool_name,
                    call_id=call.id,
                    duration_s=duration,
                    is_error=result.is_error,
                    error=result.payload if result.is_error else None,
                )
            )
            if not result.is_error:
                trace.delegated_tools.add(call.tool_name)
            history = history.append(tool_message(result, attachments=_result_attachments(result.payload)))
            emit(
                {
                    "kind": "tool_result",
                    "payload": {
                        "tool_name": call.tool_name,
                        "call_id": call.id,
                        "is_error": result.is_error,
                        "payload": result.payload,
                    },
                }
            )

    if final is None:
        trace.exhausted = True
        final = Message(Role.ASSISTANT, BUDGET_EXHAUSTED_NOTICE)
        history = history.append(final)

    return LoopResult(final=final, trace=trace, history=history)
