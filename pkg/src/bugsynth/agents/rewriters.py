"""Canned, deterministic rewriters for each baseline mutation class.

They back the mock injector so tests have a closed-form oracle. Every
rewriter takes the target block, the full region and the block's offset in
the region, and returns replacement lines (same count) or ``None`` when the
class does not apply.
"""

from __future__ import annotations

import re
from functools import lru_cache
from typing import Callable

from bugsynth.hdl import is_code_line, normalize_block

Rewriter = Callable[[list[str], list[str], int], "list[str] | None"]

_KEYWORDS = {"if", "else", "for", "while", "case", "begin", "end", "return", "assert", "default"}
_ASSIGN = re.compile(
    r"^(?P<indent>\s*)(?P<kw>assign\s+)?(?P<lhs>[A-Za-z_][\w.]*(?:\s*\[[^\]]*\])*)\s*"
    r"(?P<op><=|=)(?!=)\s*(?P<rhs>[^;]*?)\s*;(?P<tail>\s*(?://.*)?)$"
)
_PORT = re.compile(r"^(?P<indent>\s*)\.(?P<name>[A-Za-z_]\w*)(?P<rest>\s*\(.*)$")
_DECL = re.compile(
    r"^\s*(?:input|output|inout|logic|wire|reg|bit|var|localparam|parameter)\b[^\[]*\[(?P<msb>[^:\]]+):"
)
_FOR = re.compile(
    r"for\s*\(\s*(?:int\s+|integer\s+|genvar\s+|int\s+unsigned\s+)?(?P<var>[A-Za-z_]\w*)\s*=\s*(?P<init>\d+)\s*;"
)
_STATE_LHS = re.compile(r"(state|_st_|^st_|_d$|_n$|^next_|_next$)", re.IGNORECASE)
_IDENT = re.compile(r"^[A-Za-z_][\w:]*$")


def _assignment(line: str) -> re.Match | None:
    m = _ASSIGN.match(line)
    if not m:
        return None
    base = re.match(r"[A-Za-z_]\w*", m.group("lhs")).group(0)
    if base in _KEYWORDS:
        return None
    return m


def missing_assignment(block: list[str], region: list[str], idx: int) -> list[str] | None:
    if len(block) != 1 or not _assignment(block[0]):
        return None
    line = block[0]
    indent = line[: len(line) - len(line.lstrip())]
    return [f"{indent}// {line.lstrip()}"]


def bitwise_corruption(block: list[str], region: list[str], idx: int) -> list[str] | None:
    if len(block) != 1:
        return None
    m = _assignment(block[0])
    if not m:
        return None
    rhs = m.group("rhs")
    drop = re.match(r"^(?P<keep>.*?\S)\s*(?<![&|])[&|^](?![&|])\s*~?[\w'.]+(?:\[[^\]]*\])?$", rhs)
    if drop and not re.search(r"[&|^]\s*$", drop.group("keep")):
        new_rhs = drop.group("keep")
    elif rhs.startswith("~"):
        new_rhs = rhs[1:].lstrip()
    else:
        return None
    line = block[0]
    start, end = m.span("rhs")
    return [line[:start] + new_rhs + line[end:]]


_CONDITION = re.compile(r"\b(if|while|for|always\w*)\b")
_LOGIC_SWAPS = [("&&", "||"), ("||", "&&"), ("==", "!="), ("!=", "=="), ("posedge", "negedge"), ("negedge", "posedge")]


def logic_bug(block: list[str], region: list[str], idx: int) -> list[str] | None:
    if len(block) != 1:
        return None
    line = block[0]
    code = line.split("//", 1)[0]
    m = _CONDITION.search(code)
    if not m:
        return None
    head, cond = line[: m.start()], line[m.start() :]
    for old, new in _LOGIC_SWAPS:
        pos = cond.find(old)
        if pos >= 0 and cond[pos : pos + 3] != "===":
            return [head + cond[:pos] + new + cond[pos + len(old) :]]
    neg = re.match(r"^(if|while)\s*\((.*)\)(\s*(?:begin)?\s*)$", cond.strip())
    if neg and neg.group(2).count("(") == neg.group(2).count(")"):
        indent = line[: len(line) - len(line.lstrip())]
        return [f"{indent}{neg.group(1)} (!({neg.group(2)})){neg.group(3)}"]
    return None


def _nearest(region: list[str], idx: int, pick: Callable[[str], str | None], current: str) -> str | None:
    """Closest name from ``pick`` over the region, preceding lines first."""
    order = list(range(idx - 1, -1, -1)) + list(range(idx + 1, len(region)))
    for i in order:
        name = pick(region[i])
        if name and name != current:
            return name
    return None


def _port_name(line: str) -> str | None:
    m = _PORT.match(line)
    return m.group("name") if m else None


def _lhs(line: str) -> str | None:
    m = _assignment(line)
    return m.group("lhs") if m else None


def wrong_assignment(block: list[str], region: list[str], idx: int) -> list[str] | None:
    if len(block) != 1:
        return None
    line = block[0]
    port = _PORT.match(line)
    if port:
        other = _nearest(region, idx, _port_name, port.group("name"))
        if other is None:
            return None
        return [f"{port.group('indent')}.{other}{port.group('rest')}"]
    m = _assignment(line)
    if not m:
        return None
    other = _nearest(region, idx, _lhs, m.group("lhs"))
    if other is None:
        return None
    start, end = m.span("lhs")
    return [line[:start] + other + line[end:]]


def incorrect_data_size(block: list[str], region: list[str], idx: int) -> list[str] | None:
    if len(block) != 1:
        return None
    line = block[0]
    m = _DECL.match(line)
    if not m:
        return None
    msb = m.group("msb").strip()
    if msb.isdigit():
        if int(msb) == 0:
            return None
        new = str(int(msb) - 1)
    elif re.fullmatch(r".+-\s*1", msb):
        new = re.sub(r"-\s*1$", "-2", msb)
    else:
        new = f"{msb}-1"
    start, end = m.span("msb")
    return [line[:start] + new + line[end:]]


_TWO_ASSIGNS = re.compile(
    r"^(?P<indent>\s*)(?P<l1>[A-Za-z_][\w.\[\]]*)\s*(?P<o1><=|=)\s*(?P<r1>[^;]+?)\s*;\s*"
    r"(?P<l2>[A-Za-z_][\w.\[\]]*)\s*(?P<o2><=|=)\s*(?P<r2>[^;]+?)\s*;(?P<tail>.*)$"
)


def adjacent_field_swap(block: list[str], region: list[str], idx: int) -> list[str] | None:
    if len(block) != 1:
        return None
    m = _TWO_ASSIGNS.match(block[0])
    if not m or m.group("r1") == m.group("r2"):
        return None
    g = m.groupdict()
    return [
        f"{g['indent']}{g['l1']} {g['o1']} {g['r2']}; {g['l2']} {g['o2']} {g['r1']};{g['tail']}"
    ]


def loop_modification(block: list[str], region: list[str], idx: int) -> list[str] | None:
    if not block:
        return None
    m = _FOR.search(block[0])
    if not m:
        return None
    var = m.group("var")
    header = block[0][: m.start("init")] + str(int(m.group("init")) + 1) + block[0][m.end("init") :]
    body = [re.sub(rf"\[\s*{re.escape(var)}\s*\]", f"[{var}-1]", line) for line in block[1:]]
    return [header, *body]


def loop_block(region: list[str], idx: int) -> int:
    """Length of the target block for a loop header at ``idx`` (header plus up to 3 body lines)."""
    length = 1
    while length < 4 and idx + length < len(region):
        nxt = region[idx + length].strip()
        if not nxt or nxt.startswith("end") or nxt.startswith("//"):
            break
        length += 1
    return length


def fsm_transition_error(block: list[str], region: list[str], idx: int) -> list[str] | None:
    if len(block) != 1:
        return None
    line = block[0]
    m = re.search(
        r"(?P<lhs>[A-Za-z_]\w*)\s*(?P<op><=|=)(?!=)\s*(?P<rhs>[A-Za-z_][\w:]*)\s*;", line
    )
    if not m or not _STATE_LHS.search(m.group("lhs")) or m.group("rhs") == m.group("lhs"):
        return None
    lhs, rhs = m.group("lhs"), m.group("rhs")
    seen: list[str] = []
    pattern = re.compile(rf"\b{re.escape(lhs)}\s*(?:<=|=)(?!=)\s*([A-Za-z_][\w:]*)\s*;")
    for other in region:
        for value in pattern.findall(other):
            if _IDENT.match(value) and not value.endswith("_q") and value not in seen:
                seen.append(value)
    choices = [s for s in seen if s != rhs]
    if not choices:
        return None
    pos = seen.index(rhs) if rhs in seen else -1
    target = seen[(pos + 1) % len(seen)] if rhs in seen else choices[0]
    if target == rhs:
        target = choices[0]
    start, end = m.span("rhs")
    return [line[:start] + target + line[end:]]


REWRITERS: dict[str, Rewriter] = {
    "missing_assignment": missing_assignment,
    "bitwise_corruption": bitwise_corruption,
    "logic_bug": logic_bug,
    "wrong_assignment": wrong_assignment,
    "incorrect_data_size": incorrect_data_size,
    "adjacent_field_swap": adjacent_field_swap,
    "loop_modification": loop_modification,
    "fsm_transition_error": fsm_transition_error,
}


def rewrite(class_id: str, block: list[str], region: list[str], idx: int) -> list[str] | None:
    fn = REWRITERS.get(class_id)
    if fn is None:
        return None
    out = fn(block, region, idx)
    if out is None or normalize_block("\n".join(out)) == normalize_block("\n".join(block)):
        return None
    return out


def candidates(class_id: str, region: list[str]) -> list[tuple[int, int]]:
    """``(offset, length)`` of every block in ``region`` the class applies to."""
    return list(_candidates(class_id, tuple(region)))


@lru_cache(maxsize=512)
def _candidates(class_id: str, region_t: tuple[str, ...]) -> tuple[tuple[int, int], ...]:
    region = list(region_t)
    found = []
    for idx, line in enumerate(region):
        if not is_code_line(line) or line.lstrip().startswith("//"):
            continue
        length = loop_block(region, idx) if class_id == "loop_modification" else 1
        if rewrite(class_id, region[idx : idx + length], region, idx) is not None:
            found.append((idx, length))
    return tuple(found)
