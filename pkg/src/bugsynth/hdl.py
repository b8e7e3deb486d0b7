"""Lightweight lexical helpers for Verilog/SystemVerilog text.

Nothing here elaborates or parses HDL. The scanner only tracks comment state,
keyword nesting (begin/end and friends) and bracket depth, which is enough to
decide whether a span of lines forms a syntactically closed unit.
"""

from __future__ import annotations

import re

OPENERS = frozenset(
    {"begin", "case", "casez", "casex", "fork", "function", "task", "generate", "covergroup"}
)
CLOSERS = frozenset(
    {
        "end",
        "endcase",
        "join",
        "join_any",
        "join_none",
        "endfunction",
        "endtask",
        "endgenerate",
        "endgroup",
    }
)
UNIT_KEYWORDS = frozenset({"module", "macromodule", "interface", "program", "package"})
UNIT_CLOSERS = frozenset({"endmodule", "endinterface", "endprogram", "endpackage"})

_WORD = re.compile(r"[A-Za-z_`$][\w$]*")
_STRING = re.compile(r'"(?:\\.|[^"\\])*"')


def split_lines(text: str) -> list[str]:
    """Split on line feeds without terminators; a trailing newline adds no line."""
    if not text:
        return []
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    return [line[:-1] if line.endswith("\r") else line for line in lines]


def strip_comments(lines: list[str], in_block: bool = False) -> tuple[list[str], bool]:
    """Return the code portion of each line, plus the trailing block-comment state."""
    out: list[str] = []
    for line in lines:
        if not in_block and "/" not in line and '"' not in line:
            out.append(line)
            continue
        code = []
        i = 0
        n = len(line)
        while i < n:
            if in_block:
                close = line.find("*/", i)
                if close < 0:
                    i = n
                else:
                    in_block = False
                    i = close + 2
                continue
            ch = line[i]
            if ch == '"':
                m = _STRING.match(line, i)
                if m:
                    code.append(m.group(0))
                    i = m.end()
                    continue
            if line.startswith("//", i):
                break
            if line.startswith("/*", i):
                in_block = True
                i += 2
                continue
            code.append(ch)
            i += 1
        out.append("".join(code))
    return out, in_block


def is_code_line(line: str) -> bool:
    code, _ = strip_comments([line])
    return bool(code[0].strip())


def has_code(lines: list[str]) -> bool:
    code, _ = strip_comments(lines)
    return any(c.strip() for c in code)


class NestingScanner:
    """Incremental nesting tracker fed one comment-free line at a time."""

    def __init__(self) -> None:
        self.depth = 0
        self.group = 0
        self.header_open = False

    def feed(self, code: str) -> None:
        code = _STRING.sub('""', code)
        for tok in _tokens(code):
            if tok in OPENERS:
                self.depth += 1
            elif tok in CLOSERS:
                self.depth = max(0, self.depth - 1)
            elif tok in UNIT_KEYWORDS:
                self.header_open = True
            elif tok in UNIT_CLOSERS:
                self.header_open = False
            elif tok in "([{":
                self.group += 1
            elif tok in ")]}":
                self.group = max(0, self.group - 1)
            elif tok == ";" and self.header_open and self.group == 0:
                self.header_open = False

    @property
    def closed(self) -> bool:
        return self.depth == 0 and self.group == 0 and not self.header_open


def _tokens(code: str):
    i = 0
    n = len(code)
    while i < n:
        ch = code[i]
        if ch in "([{)]};":
            yield ch
            i += 1
            continue
        m = _WORD.match(code, i)
        if m:
            yield m.group(0)
            i = m.end()
            continue
        i += 1


def is_open_construct(text: str) -> bool:
    """True when ``text`` leaves a block, bracket, header or comment unterminated."""
    code, in_block = strip_comments(split_lines(text))
    scanner = NestingScanner()
    for line in code:
        scanner.feed(line)
    return in_block or not scanner.closed


def first_keyword(line: str) -> str:
    m = _WORD.match(line.strip())
    return m.group(0) if m else ""


def normalize_block(text: str) -> str:
    """Per-line strip and whitespace-run collapse, used for structural comparison."""
    return "\n".join(" ".join(line.split()) for line in split_lines(text))
