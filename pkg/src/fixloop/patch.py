"""Line-based multi-file patches.

Wire format (one object per file)::

    [{"file_path": "org/x/Week.java",
      "insertions": [{"line_number": 175, "new_lines": ["// note\\n"]}],
      "deletions": [183],
      "modifications": [{"line_number": 179, "modified_line": "  if (x == null) {\\n"}]}]

Every line number refers to the file as it was before the patch, so the
order of edit entries never matters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any


class PatchError(ValueError):
    """The patch is malformed or does not fit the files it targets."""


@dataclass(frozen=True)
class Insertion:
    line_number: int
    new_lines: tuple[str, ...]


@dataclass(frozen=True)
class Modification:
    line_number: int
    modified_line: str


@dataclass
class FileEdit:
    file_path: str
    insertions: list[Insertion] = field(default_factory=list)
    deletions: list[int] = field(default_factory=list)
    modifications: list[Modification] = field(default_factory=list)

    def to_json_obj(self) -> dict[str, Any]:
        return {
            "file_path": self.file_path,
            "insertions": [{"line_number": i.line_number, "new_lines": list(i.new_lines)} for i in self.insertions],
            "deletions": list(self.deletions),
            "modifications": [{"line_number": m.line_number, "modified_line": m.modified_line}
                              for m in self.modifications],
        }

    def conflicts(self) -> list[str]:
        problems = []
        dels = set(self.deletions)
        mod_lines = [m.line_number for m in self.modifications]
        for n in sorted(dels & set(mod_lines)):
            problems.append(f"{self.file_path}: line {n} is both deleted and modified")
        for n in sorted({n for n in mod_lines if mod_lines.count(n) > 1}):
            problems.append(f"{self.file_path}: line {n} is modified more than once")
        ins_lines = [i.line_number for i in self.insertions]
        for n in sorted({n for n in ins_lines if ins_lines.count(n) > 1}):
            problems.append(f"{self.file_path}: more than one insertion at line {n}")
        return problems


def _as_int(value: Any, what: str) -> int:
    if isinstance(value, bool):
        raise PatchError(f"{what} must be an integer, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str) and value.strip().lstrip("-").isdigit():
        return int(value.strip())
    raise PatchError(f"{what} must be an integer, got {value!r}")


@dataclass
class Patch:
    files: list[FileEdit] = field(default_factory=list)

    @classmethod
    def from_json_obj(cls, obj: Any) -> "Patch":
        if isinstance(obj, str):
            try:
                obj = json.loads(obj)
            except json.JSONDecodeError as exc:
                raise PatchError(f"patch is not valid JSON: {exc}") from None
        if isinstance(obj, dict):
            obj = [obj]
        if not isinstance(obj, list):
            raise PatchError("patch must be a list of per-file objects")
        merged: dict[str, FileEdit] = {}
        for i, entry in enumerate(obj):
            if not isinstance(entry, dict) or not isinstance(entry.get("file_path"), str):
                raise PatchError(f"patch entry {i} needs a string 'file_path'")
            path = entry["file_path"]
            fe = merged.setdefault(path, FileEdit(path))
            for ins in entry.get("insertions") or []:
                if not isinstance(ins, dict) or "line_number" not in ins:
                    raise PatchError(f"{path}: insertion needs 'line_number' and 'new_lines'")
                lines = ins.get("new_lines", [])
                if isinstance(lines, str):
                    lines = [lines]
                if not isinstance(lines, list) or not all(isinstance(x, str) for x in lines):
                    raise PatchError(f"{path}: 'new_lines' must be a list of strings")
                fe.insertions.append(Insertion(_as_int(ins["line_number"], "line_number"), tuple(lines)))
            for d in entry.get("deletions") or []:
                n = _as_int(d, "deletion line")
                if n not in fe.deletions:
                    fe.deletions.append(n)
            for mod in entry.get("modifications") or []:
                if not isinstance(mod, dict) or "line_number" not in mod or not isinstance(mod.get("modified_line"), str):
                    raise PatchError(f"{path}: modification needs 'line_number' and string 'modified_line'")
                fe.modifications.append(Modification(_as_int(mod["line_number"], "line_number"), mod["modified_line"]))
        return cls(list(merged.values()))

    def to_json_obj(self) -> list[dict[str, Any]]:
        return [f.to_json_obj() for f in self.files]

    def canonical(self) -> list[dict[str, Any]]:
        """Order-independent form used for equality and deduplication."""
        out = []
        for f in sorted(self.files, key=lambda f: f.file_path):
            out.append({
                "file_path": f.file_path,
                "insertions": sorted(([i.line_number, list(i.new_lines)] for i in f.insertions)),
                "deletions": sorted(f.deletions),
                "modifications": sorted([m.line_number, m.modified_line] for m in f.modifications),
            })
        return [f for f in out if f["insertions"] or f["deletions"] or f["modifications"]]

    def canonical_key(self) -> str:
        return json.dumps(self.canonical(), sort_keys=True, ensure_ascii=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Patch):
            return NotImplemented
        return self.canonical_key() == other.canonical_key()

    def __hash__(self) -> int:
        return hash(self.canonical_key())

    def is_empty(self) -> bool:
        return not self.canonical()

    def conflicts(self) -> list[str]:
        return [p for f in self.files for p in f.conflicts()]


def _newline_of(lines: list[str]) -> str:
    for line in lines:
        if line.endswith("\r\n"):
            return "\r\n"
        if line.endswith("\n"):
            return "\n"
    return "\n"


def _terminate(text: str, newline: str) -> list[str]:
    if text.endswith("\n"):
        return [text]
    return [text + newline]


def apply_to_lines(lines: list[str], edit: FileEdit) -> list[str]:
    """Apply one file's edits to its original lines (each keeping its line ending).

    Raises PatchError when the edit conflicts with itself or with the file.
    """
    problems = edit.conflicts()
    n = len(lines)
    for d in edit.deletions:
        if not 1 <= d <= n:
            problems.append(f"{edit.file_path}: deletion line {d} out of range 1..{n}")
    for m in edit.modifications:
        if not 1 <= m.line_number <= n:
            problems.append(f"{edit.file_path}: modification line {m.line_number} out of range 1..{n}")
    for i in edit.insertions:
        if not 1 <= i.line_number <= n + 1:
            problems.append(f"{edit.file_path}: insertion line {i.line_number} out of range 1..{n + 1}")
    if problems:
        raise PatchError("; ".join(problems))

    newline = _newline_of(lines)
    inserts = {i.line_number: i.new_lines for i in edit.insertions}
    deleted = set(edit.deletions)
    modified = {m.line_number: m.modified_line for m in edit.modifications}
    out: list[str] = []
    if n and not lines[-1].endswith(("\n", "\r")) and (n + 1 in inserts):
        # keep appended lines off the unterminated last line
        lines = lines[:-1] + [lines[-1] + newline]
    for lineno in range(1, n + 2):
        for text in inserts.get(lineno, ()):
            out.extend(_terminate(text, newline))
        if lineno > n:
            break
        if lineno in deleted:
            continue
        if lineno in modified:
            new = modified[lineno]
            if not lines[lineno - 1].endswith(("\n", "\r")) and lineno == n:
                out.append(new.rstrip("\r\n") if new.endswith("\n") else new)
            else:
                out.extend(_terminate(new, newline))
            continue
        out.append(lines[lineno - 1])
    return out


def apply_to_text(text: str, edit: FileEdit) -> str:
    return "".join(apply_to_lines(text.splitlines(keepends=True), edit))
