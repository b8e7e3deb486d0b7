"""Reversible line-range patches on a private working copy of a design."""

from __future__ import annotations

import hashlib
import json
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from bugsynth.errors import DigestMismatch, PatchError, StaleContent


class IoError(PatchError):
    pass


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def split_keepends(data: bytes) -> list[bytes]:
    """Split on LF keeping terminators; a final unterminated line is kept as is."""
    if not data:
        return []
    parts = data.split(b"\n")
    lines = [p + b"\n" for p in parts[:-1]]
    if parts[-1]:
        lines.append(parts[-1])
    return lines


def _terminator(line: bytes) -> bytes:
    if line.endswith(b"\r\n"):
        return b"\r\n"
    if line.endswith(b"\n"):
        return b"\n"
    return b""


def _body(line: bytes) -> bytes:
    return line[: len(line) - len(_terminator(line))]


def _decode(lines: Iterable[bytes]) -> list[str]:
    return [_body(line).decode("utf-8", "surrogateescape") for line in lines]


@dataclass
class Workspace:
    root: Path
    pristine_digests: dict[str, str] = field(default_factory=dict)

    @classmethod
    def create(cls, source_root: str | Path, dest: str | Path) -> "Workspace":
        """Copy ``source_root`` to ``dest`` and digest every file before any patch."""
        source_root, dest = Path(source_root), Path(dest)
        if dest.exists():
            shutil.rmtree(dest)
        try:
            shutil.copytree(source_root, dest)
        except OSError as exc:
            raise IoError(f"cannot create workspace {dest}: {exc}") from exc
        ws = cls(dest)
        ws.pristine_digests = ws.current_digests()
        return ws

    def path(self, file: str) -> Path:
        return self.root / file

    def files(self) -> list[str]:
        return sorted(
            p.relative_to(self.root).as_posix() for p in self.root.rglob("*") if p.is_file()
        )

    def digest(self, file: str) -> str:
        try:
            return sha256_bytes(self.path(file).read_bytes())
        except OSError as exc:
            raise IoError(f"cannot read {file}: {exc}") from exc

    def current_digests(self) -> dict[str, str]:
        return {f: self.digest(f) for f in self.files()}

    def is_pristine(self, files: Iterable[str] | None = None) -> bool:
        names = self.pristine_digests if files is None else files
        return all(self.digest(f) == self.pristine_digests.get(f) for f in names)

    def read_lines(self, file: str) -> list[str]:
        return _decode(self._read(file))

    def _read(self, file: str) -> list[bytes]:
        try:
            return split_keepends(self.path(file).read_bytes())
        except OSError as exc:
            raise IoError(f"cannot read {file}: {exc}") from exc

    def _write(self, file: str, lines: list[bytes]) -> None:
        target = self.path(file)
        tmp = target.with_name(target.name + ".bugsynth-tmp")
        try:
            tmp.write_bytes(b"".join(lines))
            os.replace(tmp, target)
        except OSError as exc:
            raise IoError(f"cannot write {file}: {exc}") from exc

    def remove(self) -> None:
        shutil.rmtree(self.root, ignore_errors=True)


@dataclass
class PatchRecord:
    file: str
    start_line: int
    end_line: int
    original_lines: list[bytes]
    replacement_lines: list[bytes]
    entry_id: int | None = None

    @property
    def original_text(self) -> str:
        return "\n".join(_decode(self.original_lines))

    @property
    def replacement_text(self) -> str:
        return "\n".join(_decode(self.replacement_lines))


def _encode_replacement(replacement: list[str], original: list[bytes]) -> list[bytes]:
    default = _terminator(original[0]) if original else b"\n"
    default = default or b"\n"
    out = []
    for i, text in enumerate(replacement):
        if i == len(replacement) - 1:
            end = _terminator(original[-1])
        elif i < len(original) - 1:
            end = _terminator(original[i]) or default
        else:
            end = default
        out.append(text.encode("utf-8", "surrogateescape") + end)
    return out


def apply_patch(
    ws: Workspace,
    file: str,
    line_range: tuple[int, int],
    replacement: str | list[str],
    expected_original: str | list[str] | None = None,
    entry_id: int | None = None,
) -> PatchRecord:
    """Replace lines ``start..end`` (1-based, inclusive) of ``file``.

    Terminators of the replaced lines are reused so an identity patch leaves
    the bytes unchanged.
    """
    start, end = line_range
    if not ws.path(file).is_file():
        raise IoError(f"{file} does not exist in workspace {ws.root}")
    lines = ws._read(file)
    if start < 1 or end < start or end > len(lines):
        raise PatchError(f"line range {start}-{end} is invalid for {file} ({len(lines)} lines)")
    original = lines[start - 1 : end]
    if expected_original is not None:
        want = expected_original.split("\n") if isinstance(expected_original, str) else list(expected_original)
        if _decode(original) != want:
            raise StaleContent(f"{file}:{start}-{end} does not hold the expected original text")
    new_lines = replacement.split("\n") if isinstance(replacement, str) else list(replacement)
    encoded = _encode_replacement(new_lines, original) if new_lines else []
    ws._write(file, lines[: start - 1] + encoded + lines[end:])
    return PatchRecord(file, start, end, original, encoded, entry_id)


def rollback(ws: Workspace, records: list[PatchRecord]) -> None:
    """Undo ``records`` newest first, then verify touched files are pristine."""
    touched = []
    for rec in reversed(records):
        lines = ws._read(rec.file)
        lo = rec.start_line - 1
        hi = lo + len(rec.replacement_lines)
        if lines[lo:hi] != rec.replacement_lines:
            raise DigestMismatch(f"{rec.file}:{rec.start_line} no longer holds the patched text")
        ws._write(rec.file, lines[:lo] + rec.original_lines + lines[hi:])
        touched.append(rec.file)
    bad = [f for f in dict.fromkeys(touched) if ws.digest(f) != ws.pristine_digests.get(f)]
    if bad:
        raise DigestMismatch(f"rollback left non-pristine file(s): {', '.join(bad)}")


def archive_snapshot(
    ws: Workspace, output_dir: str | Path, scenario_id: str, files: Iterable[str], manifest: dict[str, Any]
) -> Path:
    """Copy mutated files plus a manifest to ``output_dir/scenario_id``."""
    dest = Path(output_dir) / scenario_id
    try:
        for f in dict.fromkeys(files):
            target = dest / f
            target.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(ws.path(f), target)
        (dest / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot archive scenario {scenario_id}: {exc}") from exc
    return dest
