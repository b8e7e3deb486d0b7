"""Schema-checked completions with error-feedback retries."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Callable

from jsonschema import Draft202012Validator

from bugsynth.errors import AgentOutputError, SchemaViolation

SYSTEM_PROMPT = (
    "You are a hardware verification assistant working inside an automated bug "
    "insertion pipeline. Answer with exactly one fenced ```json code block that "
    "matches the requested schema. Text outside the block is ignored."
)

_STR = {"type": "string"}
_INT = {"type": "integer", "minimum": 1}

SCHEMAS: dict[str, dict[str, Any]] = {
    "split": {
        "type": "object",
        "required": ["regions"],
        "properties": {
            "regions": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "required": ["start_line", "end_line", "synopsis"],
                    "properties": {"start_line": _INT, "end_line": _INT, "synopsis": _STR},
                },
            }
        },
    },
    "boundary": {
        "type": "object",
        "required": ["continues"],
        "properties": {"continues": {"type": "boolean"}, "reason": _STR},
    },
    "region_choice": {
        "type": "object",
        "required": ["region_index", "rationale"],
        "properties": {
            "region_index": {"type": "integer", "minimum": 0},
            "rationale": {"type": "string", "minLength": 1},
            "proposed_class_id": _STR,
        },
    },
    "mutation_choice": {
        "type": "object",
        "required": ["class_id", "start_line", "end_line", "plan"],
        "properties": {
            "class_id": {"type": "string", "minLength": 1},
            "start_line": _INT,
            "end_line": _INT,
            "plan": _STR,
        },
    },
    "injected_mutation": {
        "type": "object",
        "required": ["mutated_block", "summary"],
        "properties": {
            "mutated_block": _STR,
            "summary": {"type": "string", "minLength": 1},
        },
    },
}

_VALIDATORS = {name: Draft202012Validator(schema) for name, schema in SCHEMAS.items()}
_FENCE = re.compile(r"```[ \t]*(?:json|JSON)?[ \t]*\r?\n(.*?)```", re.DOTALL)


@dataclass
class AgentRequest:
    """What a backend is asked for, alongside the rendered chat messages.

    Remote backends only read ``messages``; the deterministic mock answers from
    ``context``, which carries the same inputs the prompt was rendered from.
    """

    schema: str
    context: dict[str, Any] = field(default_factory=dict)
    attempt: int = 0
    feedback: list[str] = field(default_factory=list)


def extract_fenced_json(text: str) -> Any:
    blocks = _FENCE.findall(text or "")
    if not blocks:
        raise SchemaViolation("response contains no fenced JSON block")
    try:
        return json.loads(blocks[0])
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"fenced block is not valid JSON: {exc}") from exc


def validate_schema(value: Any, schema: str) -> None:
    errors = sorted(_VALIDATORS[schema].iter_errors(value), key=lambda e: list(e.path))
    if errors:
        detail = "; ".join(
            f"{'/'.join(str(p) for p in e.path) or '<root>'}: {e.message}" for e in errors[:5]
        )
        raise SchemaViolation(f"response does not match schema {schema!r}: {detail}")


def complete_structured(
    prompt: str,
    schema: str,
    backend,
    *,
    context: dict[str, Any] | None = None,
    check: Callable[[Any], Any] | None = None,
    max_retries: int | None = None,
    system: str = SYSTEM_PROMPT,
) -> Any:
    """Send ``prompt`` and return a schema-valid value.

    ``check`` may post-validate or convert the parsed value; raising an
    :class:`AgentOutputError` from it triggers the same feedback re-prompt as a
    parse failure. After ``max_retries`` re-prompts the last error is raised.
    """
    if schema not in SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}")
    if max_retries is None:
        max_retries = getattr(backend, "max_retries_on_malformed", 2)
    messages = [{"role": "system", "content": system}, {"role": "user", "content": prompt}]
    feedback: list[str] = []
    last: AgentOutputError | None = None
    for attempt in range(max_retries + 1):
        request = AgentRequest(schema=schema, context=dict(context or {}), attempt=attempt, feedback=list(feedback))
        raw = backend.complete(messages, request)
        try:
            value = extract_fenced_json(raw)
            validate_schema(value, schema)
            return check(value) if check else value
        except AgentOutputError as exc:
            last = exc
            feedback.append(str(exc))
            messages = messages + [
                {"role": "assistant", "content": raw},
                {
                    "role": "user",
                    "content": f"Your previous answer was rejected: {exc}\n"
                    "Fix the problem and answer again with one fenced JSON block.",
                },
            ]
    assert last is not None
    raise last
