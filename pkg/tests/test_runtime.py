import json

import pytest

from odagents.conversation import MessageHistory, ToolCall, user_message
from odagents.gateway import BackendConfig, ModelGateway, ScriptedBackend, ScriptRule
from odagents.runtime import (
    BUDGET_EXHAUSTED_NOTICE,
    AgentConfig,
    ToolBinding,
    execute_tool,
    run_loop,
)

QUESTION_SCHEMA = {
    "type": "object",
    "properties": {"question": {"type": "string"}},
    "required": ["question"],
}


def make_gateway(rules):
    gateway = ModelGateway()
    gateway.register(
        BackendConfig("scripted", "scripted", script_path="unused"),
        impl=ScriptedBackend(rules),
    )
    return gateway


def echo_binding(name="echo", handler=None):
    return ToolBinding(
        name=name,
        description="echoes the question",
        parameters=QUESTION_SCHEMA,
        handler=handler or (lambda args: {"text": f"echo: {args['question']}"}),
    )


def start_history(text="start"):
    return MessageHistory("sess").append(user_message(text))


class TestExecuteTool:
    def test_valid_args_wrapped_with_call_id(self):
        result = execute_tool(echo_binding(), ToolCall("c1", "echo", {"question": "hi"}))
        assert result.call_id == "c1"
        assert not result.is_error
        assert result.payload == {"text": "echo: hi"}

    def test_missing_required_field_named(self):
        invoked = []
        binding = echo_binding(handler=lambda args: invoked.append(args))
        result = execute_tool(binding, ToolCall("c1", "echo", {}))
        assert result.is_error
        assert "question" in result.payload
        assert not invoked  # handler never ran

    def test_handler_exception_becomes_error_result(self):
        def boom(args):
            raise RuntimeError("kaput")

        result = execute_tool(echo_binding(handler=boom), ToolCall("c1", "echo", {"question": "x"}))
        assert result.is_error
        assert "kaput" in result.payload

    def test_name_mismatch_raises(self):
        with pytest.raises(ValueError):
            execute_tool(echo_binding(), ToolCall("c1", "other", {}))


class TestRunLoop:
    def test_direct_answer(self):
        gateway = make_gateway([ScriptRule(text="direct answer")])
        result = run_loop(start_history(), [echo_binding()], AgentConfig("scripted"), gateway)
        assert result.final.content == "direct answer"
        assert len(result.trace.steps) == 1
        assert result.trace.delegated_tools == set()

    def test_tool_then_answer(self):
        rules = [
            ScriptRule(
                contains=("start",),
                tool_calls=({"tool_name": "echo", "arguments": {"question": "ping"}},),
            ),
            ScriptRule(contains=("echo: ping",), text="final answer"),
            ScriptRule(text="unexpected"),
        ]
        result = run_loop(start_history(), [echo_binding()], AgentConfig("scripted"), make_gateway(rules))
        assert result.final.content == "final answer"
        assert len(result.trace.steps) == 2
        assert result.trace.delegated_tools == {"echo"}
        assert result.trace.steps[0].tool_executions[0].tool_name == "echo"

    def test_error_recovery_visible_in_trace(self):
        def failing(args):
            raise RuntimeError("backend down")

        rules = [
            ScriptRule(
                contains=("start",),
                tool_calls=({"tool_name": "echo", "arguments": {"question": "ping"}},),
            ),
            ScriptRule(contains=("backend down",), text="recovered without the tool"),
            ScriptRule(text="unexpected"),
        ]
        result = run_loop(
            start_history(), [echo_binding(handler=failing)], AgentConfig("scripted"), make_gateway(rules)
        )
        assert result.final.content == "recovered without the tool"
        assert result.trace.steps[0].tool_executions[0].is_error
        assert result.trace.delegated_tools == set()  # only successes count

    def test_termination_within_budget(self):
        rules = [
            ScriptRule(tool_calls=({"tool_name": "echo", "arguments": {"question": "again"}},)),
        ]
        cfg = AgentConfig("scripted", max_iterations=4)
        result = run_loop(start_history(), [echo_binding()], cfg, make_gateway(rules))
        assert len(result.trace.steps) == 4
        assert result.trace.exhausted
        assert result.final.content == BUDGET_EXHAUSTED_NOTICE

    def test_call_result_bijection(self):
        rules = [
            ScriptRule(
                contains=("start",),
                tool_calls=(
                    {"tool_name": "echo", "arguments": {"question": "one"}},
                    {"tool_name": "echo", "arguments": {"question": "two"}},
                ),
            ),
            ScriptRule(contains=("echo:",), text="done"),
            ScriptRule(text="unexpected"),
        ]
        result = run_loop(start_history(), [echo_binding()], AgentConfig("scripted"), make_gateway(rules))
        call_ids = [c.id for m in result.history.messages for c in m.tool_calls]
        result_ids = [
            m.tool_result.call_id for m in result.history.messages if m.tool_result is not None
        ]
        assert sorted(call_ids) == sorted(result_ids)
        assert len(set(call_ids)) == len(call_ids)

    def test_sequential_order_of_multiple_calls(self):
        seen = []

        def recorder(args):
            seen.append(args["question"])
            return {"text": "ok"}

        rules = [
            ScriptRule(
                contains=("start",),
                tool_calls=(
                    {"tool_name": "echo", "arguments": {"question": "first"}},
                    {"tool_name": "echo", "arguments": {"question": "second"}},
                ),
            ),
            ScriptRule(text="done"),
        ]
        run_loop(start_history(), [echo_binding(handler=recorder)], AgentConfig("scripted"), make_gateway(rules))
        assert seen == ["first", "second"]

    def test_unknown_tool_is_error_result(self):
        rules = [
            ScriptRule(
                contains=("start",),
                tool_calls=({"tool_name": "missing", "arguments": {"question": "x"}},),
            ),
            ScriptRule(contains=("unknown tool",), text="noticed"),
            ScriptRule(text="unexpected"),
        ]
        result = run_loop(start_history(), [echo_binding()], AgentConfig("scripted"), make_gateway(rules))
        assert result.final.content == "noticed"

    def test_deterministic_trace(self):
        rules = [
            ScriptRule(
                contains=("start",),
                tool_calls=({"tool_name": "echo", "arguments": {"question": "ping"}},),
            ),
            ScriptRule(contains=("echo: ping",), text="final"),
            ScriptRule(text="unexpected"),
        ]

        def run_once():
            result = run_loop(start_history(), [echo_binding()], AgentConfig("scripted"), make_gateway(rules))
            return json.dumps([m.to_dict() for m in result.history.messages], sort_keys=True)

        assert run_once() == run_once()

    def test_duplicate_tool_names_rejected(self):
        with pytest.raises(ValueError):
            run_loop(
                start_history(),
                [echo_binding(), echo_binding()],
                AgentConfig("scripted"),
                make_gateway([ScriptRule(text="x")]),
            )

    def test_trace_events_flatten_in_order(self):
        rules = [
            ScriptRule(
                contains=("start",),
                tool_calls=({"tool_name": "echo", "arguments": {"question": "ping"}},),
            ),
            ScriptRule(contains=("echo: ping",), text="final"),
            ScriptRule(text="unexpected"),
        ]
        result = run_loop(start_history(), [echo_binding()], AgentConfig("scripted"), make_gateway(rules))
        kinds = [e["kind"] for e in result.trace.to_events()]
        assert kinds == ["step_started", "tool_call", "tool_result", "step_started"]
