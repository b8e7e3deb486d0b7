"""Deterministic mock backend.

Policies (closed-form so tests have an oracle):

* splitter: the syntactic splitter, one region per top-level construct;
* boundary: the same continuation rule the syntactic splitter applies;
* region selector: lowest mutation count among mutable regions, then lowest index;
* mutation selector: least-attempted applicable class in index order, first
  unused target block;
* injector: the canned rewriter of the chosen class.
"""

from __future__ import annotations

import json
import threading
from collections import Counter, defaultdict, deque
from typing import Any, Callable

from bugsynth.agents import rewriters
from bugsynth.agents.structured import AgentRequest


def fenced(value: Any) -> str:
    return "```json\n" + json.dumps(value, indent=2) + "\n```"


class MockBackend:
    kind = "mock"

    def __init__(
        self,
        script: dict[str, list[Any]] | None = None,
        max_retries_on_malformed: int = 2,
    ) -> None:
        """``script`` queues canned replies per schema, consumed before the policy.

        A queued item may be a raw string, a JSON-able value (sent fenced) or a
        callable taking the request and returning either.
        """
        self.max_retries_on_malformed = max_retries_on_malformed
        self._script = {k: deque(v) for k, v in (script or {}).items()}
        self._lock = threading.Lock()
        self.calls: Counter = Counter()
        self.requests: list[AgentRequest] = []

    def push(self, schema: str, *replies: Any) -> None:
        with self._lock:
            self._script.setdefault(schema, deque()).extend(replies)

    def complete(self, messages: list[dict[str, str]], request: AgentRequest) -> str:
        with self._lock:
            self.calls[request.schema] += 1
            self.requests.append(request)
            queue = self._script.get(request.schema)
            reply = queue.popleft() if queue else None
        if reply is None:
            reply = POLICIES[request.schema](request.context)
        if callable(reply):
            reply = reply(request)
        return reply if isinstance(reply, str) else fenced(reply)


def _split(ctx: dict[str, Any]) -> dict[str, Any]:
    from bugsynth.partition import SYNOPSES, syntactic_split

    spans = syntactic_split(ctx["lines"], ctx["first_line"])
    return {
        "regions": [
            {"start_line": s, "end_line": e, "synopsis": SYNOPSES[k]} for s, e, k in spans
        ]
    }


def _boundary(ctx: dict[str, Any]) -> dict[str, Any]:
    from bugsynth.partition import syntactically_continues

    if syntactically_continues(ctx["tail"], ctx["auxiliary"]):
        return {"continues": True, "reason": "the following lines continue or close the last region"}
    return {"continues": False, "reason": "last region is complete"}


def _region(ctx: dict[str, Any]) -> dict[str, Any]:
    mutable = [r for r in ctx["regions"] if r["mutable"]]
    if not mutable:
        return {"region_index": 0, "rationale": "no mutable region", "proposed_class_id": ""}
    best = min(mutable, key=lambda r: (r["mutation_count"], r["index"]))
    return {
        "region_index": best["index"],
        "rationale": (
            f"Region {best['index']} ({best['synopsis']}) has the fewest prior mutations "
            f"({best['mutation_count']})."
        ),
        "proposed_class_id": "",
    }


def _mutation(ctx: dict[str, Any]) -> dict[str, Any]:
    region_lines: list[str] = ctx["region_lines"]
    first = ctx["first_line"]
    classes: list[str] = ctx["class_ids"]
    attempts: Counter = Counter(h["class_id"] for h in ctx["history"])
    used = {(h["class_id"], h["start_line"]) for h in ctx["history"]}
    used |= {(r["class_id"], r["start_line"]) for r in ctx["rejected"]}
    occupied = set()
    for s, e in ctx["occupied"]:
        occupied.update(range(s, e + 1))
    order = sorted(range(len(classes)), key=lambda i: (attempts[classes[i]], i))
    for i in order:
        cid = classes[i]
        for off, length in rewriters.candidates(cid, region_lines):
            start, end = first + off, first + off + length - 1
            if (cid, start) in used or occupied.intersection(range(start, end + 1)):
                continue
            return {
                "class_id": cid,
                "start_line": start,
                "end_line": end,
                "plan": f"apply {cid} to lines {start}-{end}",
            }
    return {"class_id": classes[0], "start_line": first, "end_line": first, "plan": "no applicable class"}


def _inject(ctx: dict[str, Any]) -> dict[str, Any]:
    target: list[str] = ctx["target_lines"]
    off = ctx["start_line"] - ctx["region_first_line"]
    out = rewriters.rewrite(ctx["class_id"], target, ctx["region_lines"], off)
    if out is None:
        return {"mutated_block": "\n".join(target), "summary": "no applicable rewrite"}
    return {
        "mutated_block": "\n".join(out),
        "summary": f"{ctx['class_id']} at lines {ctx['start_line']}-{ctx['end_line']}",
    }


POLICIES: dict[str, Callable[[dict[str, Any]], dict[str, Any]]] = defaultdict(
    lambda: (lambda ctx: {}),
    {
        "split": _split,
        "boundary": _boundary,
        "region_choice": _region,
        "mutation_choice": _mutation,
        "injected_mutation": _inject,
    },
)
