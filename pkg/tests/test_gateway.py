import json

import httpx
import pytest

from odagents.conversation import user_message
from odagents.gateway import (
    BackendConfig,
    ChatRequest,
    ChatResponse,
    FinishReason,
    HttpBackend,
    ModelGateway,
    RetryableError,
    ScriptError,
    ScriptedBackend,
    ScriptRule,
    Usage,
    UsageLedger,
    ledger_totals,
    load_script,
)


def write_script(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")


CATCH_ALL = {"match": {}, "response": {"text": "fallback"}}


def make_request(text, agent=None):
    return ChatRequest((user_message(text),), agent=agent)


class TestLoadScript:
    def test_rules_in_file_order(self, tmp_path):
        path = tmp_path / "s.jsonl"
        write_script(path, [{"match": {"contains": ["a"]}, "response": {"text": "1"}}, CATCH_ALL])
        rules = load_script(str(path))
        assert len(rules) == 2
        assert rules[0].contains == ("a",)
        assert rules[1].is_catch_all()

    def test_missing_catch_all(self, tmp_path):
        path = tmp_path / "s.jsonl"
        write_script(path, [{"match": {"contains": ["a"]}, "response": {"text": "1"}}])
        with pytest.raises(ScriptError, match="catch-all"):
            load_script(str(path))

    def test_parse_error_cites_line(self, tmp_path):
        path = tmp_path / "s.jsonl"
        lines = [json.dumps(CATCH_ALL)] * 6 + ["{not json"]
        path.write_text("\n".join(lines), encoding="utf-8")
        with pytest.raises(ScriptError, match="line 7"):
            load_script(str(path))


class TestScriptedBackend:
    def test_direct_rule_hit(self):
        backend = ScriptedBackend(
            [ScriptRule(contains=("hello",), text="hi"), ScriptRule(text="fallback")]
        )
        resp = backend.complete(make_request("hello there"))
        assert resp.message.content == "hi"
        assert resp.finish_reason is FinishReason.STOP

    def test_tool_call_rule(self):
        rule = ScriptRule(
            contains=("jobs",),
            tool_calls=({"tool_name": "da_query", "arguments": {"question": "count jobs"}},),
        )
        backend = ScriptedBackend([rule, ScriptRule(text="fallback")])
        resp = backend.complete(make_request("how many jobs?"))
        assert resp.finish_reason is FinishReason.TOOL_CALLS
        assert resp.message.tool_calls[0].tool_name == "da_query"

    def test_first_match_wins(self):
        backend = ScriptedBackend(
            [
                ScriptRule(contains=("power",), text="first"),
                ScriptRule(contains=("power", "gpu"), text="second"),
                ScriptRule(text="fallback"),
            ]
        )
        assert backend.complete(make_request("gpu power")).message.content == "first"

    def test_agent_tag_filtering(self):
        backend = ScriptedBackend(
            [
                ScriptRule(contains=(), agent="da", text="da answer"),
                ScriptRule(text="fallback"),
            ]
        )
        assert backend.complete(make_request("x", agent="da")).message.content == "da answer"
        assert backend.complete(make_request("x", agent="qp")).message.content == "fallback"

    def test_no_matching_rule_names_input(self):
        backend = ScriptedBackend([ScriptRule(contains=("never",), text="x")])
        with pytest.raises(ScriptError, match="no script rule matched"):
            backend.complete(make_request("something else"))

    def test_deterministic_byte_for_byte(self):
        rules = [
            ScriptRule(
                contains=("q",),
                tool_calls=({"tool_name": "ir_lookup", "arguments": {"question": "idle"}},),
            ),
            ScriptRule(text="done"),
        ]
        seqs = []
        for _ in range(3):
            backend = ScriptedBackend(rules)
            out = []
            for text in ("q one", "other", "q two"):
                resp = backend.complete(make_request(text))
                out.append(json.dumps(resp.message.to_dict(), sort_keys=True))
            seqs.append(out)
        assert seqs[0] == seqs[1] == seqs[2]

    def test_usage_counted_with_estimator(self):
        backend = ScriptedBackend([ScriptRule(text="two words")])
        resp = backend.complete(make_request("hello world"))
        # input: "[user] hello world" -> 5 tokens; output: "two words" -> 2
        assert resp.usage == Usage(5, 2)


class TestLedger:
    def test_empty_totals(self):
        assert ledger_totals(UsageLedger()) == Usage(0, 0)

    def test_sum_and_filter(self):
        ledger = UsageLedger()
        ledger.record("a", Usage(100, 20))
        ledger.record("a", Usage(50, 5))
        ledger.record("b", Usage(7, 3))
        assert ledger_totals(ledger) == Usage(157, 28)
        assert ledger_totals(ledger, "a") == Usage(150, 25)
        assert ledger_totals(ledger, "b") == Usage(7, 3)

    def test_conservation_across_completions(self):
        gateway = ModelGateway()
        gateway.register(
            BackendConfig("scripted", "scripted", script_path="unused"),
            impl=ScriptedBackend([ScriptRule(text="ok")]),
        )
        usages = []
        for i in range(5):
            resp = gateway.complete("scripted", make_request(f"message number {i}"))
            usages.append(resp.usage)
        totals = ledger_totals(gateway.ledger)
        assert totals.input_tokens == sum(u.input_tokens for u in usages)
        assert totals.output_tokens == sum(u.output_tokens for u in usages)

    def test_round_trip_records(self):
        ledger = UsageLedger()
        ledger.record("a", Usage(10, 2), session_id="s")
        restored = UsageLedger.from_records(ledger.to_records())
        assert ledger_totals(restored) == Usage(10, 2)


class TestHttpBackend:
    def make_backend(self, handler):
        cfg = BackendConfig(
            "remote", "http", endpoint="http://testserver/v1/chat/completions", model_name="m"
        )
        transport = httpx.MockTransport(handler)
        return HttpBackend(cfg, client=httpx.Client(transport=transport))

    def test_parses_chat_completion(self):
        def handler(request):
            body = json.loads(request.content)
            assert body["model"] == "m"
            assert body["messages"][0] == {"role": "user", "content": "hi"}
            return httpx.Response(
                200,
                json={
                    "choices": [{"message": {"role": "assistant", "content": "hey"}, "finish_reason": "stop"}],
                    "usage": {"prompt_tokens": 12, "completion_tokens": 3},
                },
            )

        resp = self.make_backend(handler).complete(make_request("hi"))
        assert resp.message.content == "hey"
        assert resp.usage == Usage(12, 3)  # reported usage overrides estimates

    def test_parses_tool_calls(self):
        def handler(request):
            return httpx.Response(
                200,
                json={
                    "choices": [
                        {
                            "message": {
                                "role": "assistant",
                                "content": "",
                                "tool_calls": [
                                    {
                                        "id": "c9",
                                        "type": "function",
                                        "function": {"name": "da_query", "arguments": '{"question": "q"}'},
                                    }
                                ],
                            },
                            "finish_reason": "tool_calls",
                        }
                    ],
                    "usage": {"prompt_tokens": 1, "completion_tokens": 1},
                },
            )

        resp = self.make_backend(handler).complete(make_request("hi"))
        assert resp.finish_reason is FinishReason.TOOL_CALLS
        assert resp.message.tool_calls[0].arguments == {"question": "q"}

    def test_unreachable_endpoint_is_retryable(self):
        attempts = []

        def handler(request):
            attempts.append(1)
            raise httpx.ConnectError("refused")

        backend = self.make_backend(handler)
        backend.backoff_base_s = 0.0
        with pytest.raises(RetryableError, match="unreachable"):
            backend.complete(make_request("hi"))
        assert len(attempts) == 3  # initial try + 2 retries

    def test_server_error_retried_then_succeeds(self):
        calls = []

        def handler(request):
            calls.append(1)
            if len(calls) < 2:
                return httpx.Response(500, json={})
            return httpx.Response(
                200,
                json={
                    "choices": [{"message": {"role": "assistant", "content": "ok"}, "finish_reason": "stop"}],
                    "usage": {"prompt_tokens": 1, "completion_tokens": 1},
                },
            )

        backend = self.make_backend(handler)
        backend.backoff_base_s = 0.0
        assert backend.complete(make_request("hi")).message.content == "ok"


def test_request_invariants():
    with pytest.raises(ValueError):
        ChatRequest(())
    with pytest.raises(ValueError):
        ChatRequest((user_message("x"),), temperature=3.0)


def test_response_invariant():
    from odagents.conversation import assistant_message

    with pytest.raises(ValueError):
        ChatResponse(assistant_message("x"), Usage(1, 1), FinishReason.TOOL_CALLS)
