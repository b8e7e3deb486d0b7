from __future__ import annotations

import json
import string

import httpx
import pytest
from synth import make_module

from bugsynth.agents import complete_structured, extract_fenced_json
from bugsynth.agents.backend import RemoteChatBackend
from bugsynth.agents.mock import MockBackend, fenced
from bugsynth.agents.prompts import TEMPLATE_NAMES, load_template, render
from bugsynth.agents.steps import MutationChoice, inject_mutation, select_mutation, select_region
from bugsynth.agents.structured import AgentRequest, validate_schema
from bugsynth.catalog import load_baseline
from bugsynth.errors import (
    BackendError,
    InvalidChoice,
    NoMutableRegion,
    NoOpMutation,
    SchemaViolation,
)
from bugsynth.memory import RegionHistory, RegionStats
from bugsynth.partition import ModulePartition, Region, fallback_partition

INDEX = load_baseline()

# ---------------------------------------------------------------------------
# structured output
# ---------------------------------------------------------------------------


def test_extract_fenced_json_takes_first_valid_block():
    text = "thinking...\n```json\n{\"a\": 1}\n```\nand more"
    assert extract_fenced_json(text) == {"a": 1}
    with pytest.raises(SchemaViolation):
        extract_fenced_json('{"a": 1}')
    with pytest.raises(SchemaViolation):
        extract_fenced_json("```json\n{oops}\n```")


def test_schema_validation_mentions_path():
    with pytest.raises(SchemaViolation) as exc:
        validate_schema({"region_index": -1, "rationale": "x"}, "region_choice")
    assert "region_index" in str(exc.value)


def test_complete_structured_retries_with_feedback():
    backend = MockBackend(script={"boundary": ["garbage", {"continues": "yes"}, {"continues": True, "reason": "r"}]})
    value = complete_structured("p", "boundary", backend, max_retries=2)
    assert value == {"continues": True, "reason": "r"}
    assert backend.calls["boundary"] == 3
    last = backend.requests[-1]
    assert last.attempt == 2 and len(last.feedback) == 2


def test_complete_structured_gives_up_after_retries():
    backend = MockBackend(script={"boundary": ["garbage"] * 5})
    with pytest.raises(SchemaViolation):
        complete_structured("p", "boundary", backend, max_retries=1)
    assert backend.calls["boundary"] == 2


def test_unknown_schema_rejected():
    with pytest.raises(ValueError):
        complete_structured("p", "nope", MockBackend())


# ---------------------------------------------------------------------------
# prompts
# ---------------------------------------------------------------------------


def test_every_template_placeholder_is_filled():
    for name in TEMPLATE_NAMES:
        placeholders = {
            m.group("named") or m.group("braced")
            for m in string.Template.pattern.finditer(load_template(name).template)
            if m.group("named") or m.group("braced")
        }
        values = {p: f"<<{p.upper()}>>" for p in placeholders}
        text = render(name, **values)
        for p in placeholders:
            assert f"<<{p.upper()}>>" in text
        with pytest.raises(KeyError):
            render(name)


def test_template_override_directory(tmp_path):
    (tmp_path / "boundary.txt").write_text("custom $tail / $auxiliary", encoding="utf-8")
    assert render("boundary", tmp_path, tail="T", auxiliary="A") == "custom T / A"
    # names missing from the override directory fall back to the packaged template
    assert "Task" in render("injector", tmp_path, **{k: "x" for k in (
        "class_id", "spec", "first_line", "last_line", "code", "start_line", "end_line", "target", "plan", "line_count")})


# ---------------------------------------------------------------------------
# remote backend
# ---------------------------------------------------------------------------


def _backend(handler, **kw) -> RemoteChatBackend:
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return RemoteChatBackend("http://llm.test/v1/", "m", api_key="k", client=client, backoff_seconds=0, **kw)


def _ok(content: str) -> httpx.Response:
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


REQ = AgentRequest(schema="boundary")


def test_remote_backend_posts_chat_completion():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return _ok("hello")

    out = _backend(handler, temperature=0.2).complete([{"role": "user", "content": "hi"}], REQ)
    assert out == "hello"
    assert seen["url"] == "http://llm.test/v1/chat/completions"
    assert seen["auth"] == "Bearer k"
    assert seen["body"]["model"] == "m" and seen["body"]["temperature"] == 0.2


def test_remote_backend_retries_server_errors():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(503) if len(calls) < 3 else _ok("fine")

    assert _backend(handler, transport_retries=2).complete([], REQ) == "fine"
    assert len(calls) == 3


def test_remote_backend_client_error_is_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401, text="bad key")

    with pytest.raises(BackendError, match="401"):
        _backend(handler).complete([], REQ)
    assert len(calls) == 1


def test_remote_backend_timeout():
    def handler(request):
        raise httpx.ReadTimeout("slow", request=request)

    with pytest.raises(BackendError, match="timeout"):
        _backend(handler, transport_retries=1, timeout_seconds=3).complete([], REQ)


def test_remote_backend_malformed_body():
    with pytest.raises(BackendError, match="malformed"):
        _backend(lambda r: httpx.Response(200, json={"nope": 1})).complete([], REQ)


def test_api_key_from_environment(monkeypatch):
    monkeypatch.setenv("MY_KEY", "secret")
    b = RemoteChatBackend("http://x", api_key_env="MY_KEY")
    assert b.api_key == "secret"
    b.close()


def test_remote_backend_drives_structured_completion():
    replies = iter(["no fence", fenced({"continues": False, "reason": "complete"})])
    backend = _backend(lambda r: _ok(next(replies)))
    assert complete_structured("p", "boundary", backend) == {"continues": False, "reason": "complete"}


# ---------------------------------------------------------------------------
# agent steps
# ---------------------------------------------------------------------------

SOURCE = make_module("steps", 4)
PART = fallback_partition(SOURCE, "d:steps")
LINES = SOURCE.split("\n")


def _region_source(region: Region) -> str:
    return "\n".join(LINES[region.start_line - 1 : region.end_line])


def test_single_mutable_region_needs_no_agent_call():
    backend = MockBackend()
    part = ModulePartition("x", 10, [Region(0, 1, 5), Region(1, 6, 10, mutable=False)])
    assert select_region(part, {}, INDEX, backend).region_index == 0
    assert backend.calls["region_choice"] == 0


def test_no_mutable_region():
    part = ModulePartition("x", 10, [Region(0, 1, 10, mutable=False)])
    with pytest.raises(NoMutableRegion):
        select_region(part, {}, INDEX, MockBackend())


def test_region_selector_rejects_immutable_choice_and_reprompts():
    part = ModulePartition("x", 10, [Region(0, 1, 3, mutable=False), Region(1, 4, 6), Region(2, 7, 10)])
    backend = MockBackend(script={"region_choice": [{"region_index": 0, "rationale": "r"}]})
    choice = select_region(part, {1: RegionStats(2, 1, {})}, INDEX, backend)
    assert choice.region_index == 1
    assert "not a mutable region" in backend.requests[-1].feedback[0]


def test_region_selector_prompt_includes_history_unless_coverage_mode():
    backend = MockBackend()
    select_region(PART, {2: RegionStats(4, 1, {"logic_bug": 4})}, INDEX, backend)
    assert backend.requests[-1].context["coverage_mode"] is False
    backend2 = MockBackend()
    select_region(PART, {}, INDEX, backend2, coverage_mode=True)
    assert backend2.requests[-1].context["coverage_mode"] is True


def test_mock_region_policy_prefers_least_mutated():
    part = fallback_partition(SOURCE, "d:steps")
    for r in part.regions:
        r.mutation_count = 5
    part.regions[3].mutation_count = 1
    assert select_region(part, {}, INDEX, MockBackend()).region_index == 3


def _assign_region() -> Region:
    return next(r for r in PART.regions if "Continuous" in r.synopsis)


def test_mutation_selector_enforces_arity():
    region = _assign_region()
    bad = {"class_id": "missing_assignment", "start_line": region.start_line,
           "end_line": region.start_line + 1, "plan": "p"}
    backend = MockBackend(script={"mutation_choice": [bad]})
    choice = select_mutation(_region_source(region), INDEX, RegionHistory(), backend, region=region)
    assert choice.line_count == 1
    assert "at most 1 line" in backend.requests[-1].feedback[0]


def test_mutation_selector_rejects_out_of_region_and_overlap():
    region = _assign_region()
    outside = {"class_id": "logic_bug", "start_line": 1, "end_line": 1, "plan": ""}
    backend = MockBackend(script={"mutation_choice": [outside, outside, outside]})
    with pytest.raises(InvalidChoice):
        select_mutation(_region_source(region), INDEX, RegionHistory(), backend, region=region)
    line = region.start_line
    choice = select_mutation(
        _region_source(region), INDEX, RegionHistory(), MockBackend(), region=region, occupied=[(line, line + 1)]
    )
    assert choice.start_line > line + 1


def test_injector_enforces_line_count_and_change():
    region = _assign_region()
    src = _region_source(region)
    target = LINES[region.start_line]
    choice = MutationChoice("missing_assignment", region.start_line + 1, region.start_line + 1, "", target)
    spec = INDEX.resolve_spec("missing_assignment")
    two = {"mutated_block": "// a\n// b", "summary": "s"}
    same = {"mutated_block": target, "summary": "s"}
    with pytest.raises(NoOpMutation):
        inject_mutation(choice, src, spec, MockBackend(script={"injected_mutation": [same] * 3}), region=region)
    with pytest.raises(InvalidChoice):
        inject_mutation(choice, src, spec, MockBackend(script={"injected_mutation": [two] * 3}), region=region)
    out = inject_mutation(choice, src, spec, MockBackend(), region=region)
    assert out.mutated_block == "  // " + target.strip()
