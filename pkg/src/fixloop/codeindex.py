"""Structural source indexing: classes and methods with line spans.

Java (and other brace languages) goes through a lightweight structural
parser: comments and literals are blanked out, braces are balanced, and the
header text in front of each ``{`` is matched against class and method
declaration patterns. Python files use the stdlib ``ast`` module.
"""

from __future__ import annotations

import ast
import bisect
import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

JAVA_SUFFIXES = (".java",)
PYTHON_SUFFIXES = (".py",)
SOURCE_SUFFIXES = JAVA_SUFFIXES + PYTHON_SUFFIXES
MODULE_SCOPE = "<module>"

_KEYWORDS = {
    "if", "for", "while", "switch", "catch", "synchronized", "return", "new", "throw",
    "else", "do", "try", "finally", "case", "assert", "super", "this",
}
_CLASS_RE = re.compile(r"(?:^|[^\w$@.])(?:@\s*)?(class|interface|enum|record)\s+([A-Za-z_$][\w$]*)")
_ANNOTATION_RE = re.compile(r"@\s*[A-Za-z_$][\w$.]*\s*(?:\((?:[^()]|\([^()]*\))*\))?")
_METHOD_RE = re.compile(
    r"([A-Za-z_$][\w$]*)\s*\(((?:[^()]|\([^()]*\))*)\)\s*(?:\[\s*\]\s*)*(?:throws\s+[\w$.,\s<>]+)?$"
)


@dataclass
class MethodInfo:
    name: str
    signature: str
    start_line: int
    end_line: int
    decl_line: int
    class_name: str
    has_body: bool = True


@dataclass
class ClassInfo:
    name: str
    start_line: int
    end_line: int
    methods: list[MethodInfo] = field(default_factory=list)


@dataclass
class FileIndex:
    path: str
    classes: list[ClassInfo] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    line_count: int = 0

    def methods(self) -> list[MethodInfo]:
        return [m for c in self.classes for m in c.methods]

    def method_names(self) -> list[str]:
        return list(dict.fromkeys(m.name for m in self.methods()))

    def listing(self) -> dict[str, list[str]]:
        return {c.name: [m.name for m in c.methods] for c in self.classes}


def mask_java(text: str) -> str:
    """Blank out comments, string, char and text-block literals, keeping offsets and newlines."""
    out = list(text)
    i, n = 0, len(text)

    def blank(a: int, b: int) -> None:
        for k in range(a, min(b, n)):
            if out[k] not in "\r\n":
                out[k] = " "

    while i < n:
        ch = text[i]
        nxt = text[i + 1] if i + 1 < n else ""
        if ch == "/" and nxt == "/":
            j = text.find("\n", i)
            j = n if j < 0 else j
            blank(i, j)
            i = j
        elif ch == "/" and nxt == "*":
            j = text.find("*/", i + 2)
            j = n if j < 0 else j + 2
            blank(i, j)
            i = j
        elif text.startswith('"""', i):
            j = text.find('"""', i + 3)
            j = n if j < 0 else j + 3
            blank(i, j)
            i = j
        elif ch in "\"'":
            j = i + 1
            while j < n and text[j] != ch and text[j] != "\n":
                j += 2 if text[j] == "\\" else 1
            j = min(j + 1, n)
            blank(i, j)
            i = j
        else:
            i += 1
    return "".join(out)


class _LineMap:
    def __init__(self, text: str) -> None:
        self.starts = [0] + [m.end() for m in re.finditer(r"\n", text)]

    def line(self, offset: int) -> int:
        return bisect.bisect_right(self.starts, offset)


@dataclass
class _Scope:
    kind: str  # file | class | method | block
    name: str = ""
    start: int = 0
    decl: int = 0
    signature: str = ""
    info: ClassInfo | None = None


def _strip_annotations(header: str) -> str:
    return _ANNOTATION_RE.sub(" ", header)


def _leading_offset(masked: str, seg_start: int, end: int) -> int:
    k = seg_start
    while k < end and masked[k].isspace():
        k += 1
    return k


def parse_java(text: str, path: str = "") -> FileIndex:
    masked = mask_java(text)
    lines = _LineMap(masked)
    index = FileIndex(path, line_count=len(text.splitlines()))
    stack = [_Scope("file")]
    seg_start = 0

    def enclosing_class() -> str:
        return ".".join(s.name for s in stack if s.kind == "class")

    for i, ch in enumerate(masked):
        if ch == "{":
            raw_header = masked[seg_start:i]
            header = " ".join(raw_header.split())
            start = _leading_offset(masked, seg_start, i)
            parent = stack[-1]
            scope = _Scope("block", start=start)
            cls = _CLASS_RE.search(_strip_annotations(header))
            if cls and parent.kind in ("file", "class") and not re.search(r"\bnew\b", header):
                name = ".".join(filter(None, [enclosing_class(), cls.group(2)]))
                scope = _Scope("class", cls.group(2), start=start)
                scope.info = ClassInfo(name, lines.line(start), 0)
                index.classes.append(scope.info)
            elif parent.kind == "class":
                bare = " ".join(_strip_annotations(header).split())
                m = _METHOD_RE.search(bare)
                if m and m.group(1) not in _KEYWORDS and "=" not in bare[:m.start()] \
                        and not re.search(r"\bnew\b", bare[:m.start()]):
                    hits = list(re.finditer(r"\b" + re.escape(m.group(1)) + r"\s*\(", raw_header))
                    name_at = hits[-1].start() if hits else 0
                    scope = _Scope("method", m.group(1), start=start,
                                   decl=lines.line(seg_start + name_at), signature=bare)
            stack.append(scope)
            seg_start = i + 1
        elif ch == "}":
            if len(stack) == 1:
                index.warnings.append(f"unbalanced '}}' at line {lines.line(i)}")
                seg_start = i + 1
                continue
            scope = stack.pop()
            end_line = lines.line(i)
            if scope.kind == "class" and scope.info is not None:
                scope.info.end_line = end_line
            elif scope.kind == "method":
                owner = next(s for s in reversed(stack) if s.kind == "class")
                assert owner.info is not None
                owner.info.methods.append(MethodInfo(
                    scope.name, scope.signature, lines.line(scope.start), end_line, scope.decl,
                    owner.info.name))
            seg_start = i + 1
        elif ch == ";":
            parent = stack[-1]
            if parent.kind == "class":
                raw_header = masked[seg_start:i]
                bare = " ".join(_strip_annotations(raw_header).split())
                m = _METHOD_RE.search(bare)
                # abstract / interface declarations always carry a return type
                if m and m.group(1) not in _KEYWORDS and "=" not in bare \
                        and not re.search(r"\bnew\b", bare) and bare[:m.start()].strip():
                    start = _leading_offset(masked, seg_start, i)
                    assert parent.info is not None
                    hit = re.search(re.escape(m.group(1)) + r"\s*\(", raw_header)
                    parent.info.methods.append(MethodInfo(
                        m.group(1), bare, lines.line(start), lines.line(i),
                        lines.line(seg_start + (hit.start() if hit else 0)), parent.info.name,
                        has_body=False))
            seg_start = i + 1

    if len(stack) > 1:
        index.warnings.append(f"{len(stack) - 1} unclosed '{{' at end of file")
        last = index.line_count or 1
        while len(stack) > 1:
            scope = stack.pop()
            if scope.kind == "class" and scope.info is not None:
                scope.info.end_line = last
            elif scope.kind == "method":
                owner = next((s for s in reversed(stack) if s.kind == "class"), None)
                if owner is not None and owner.info is not None:
                    owner.info.methods.append(MethodInfo(
                        scope.name, scope.signature, lines.line(scope.start), last, scope.decl,
                        owner.info.name))
    for c in index.classes:
        c.methods.sort(key=lambda m: (m.start_line, m.name))
    return index


def parse_python(text: str, path: str = "") -> FileIndex:
    index = FileIndex(path, line_count=len(text.splitlines()))
    try:
        tree = ast.parse(text)
    except SyntaxError as exc:
        index.warnings.append(f"syntax error at line {exc.lineno}: {exc.msg}")
        return index

    def first_line(node: ast.AST) -> int:
        decos = getattr(node, "decorator_list", [])
        return min([node.lineno] + [d.lineno for d in decos])  # type: ignore[attr-defined]

    def method(node: ast.FunctionDef | ast.AsyncFunctionDef, owner: str) -> MethodInfo:
        prefix = "async def" if isinstance(node, ast.AsyncFunctionDef) else "def"
        sig = f"{prefix} {node.name}({ast.unparse(node.args)})"
        if node.returns is not None:
            sig += f" -> {ast.unparse(node.returns)}"
        return MethodInfo(node.name, sig, first_line(node), node.end_lineno or node.lineno, node.lineno, owner)

    def visit_class(node: ast.ClassDef, prefix: str) -> None:
        name = f"{prefix}.{node.name}" if prefix else node.name
        info = ClassInfo(name, first_line(node), node.end_lineno or node.lineno)
        index.classes.append(info)
        for child in node.body:
            if isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef)):
                info.methods.append(method(child, name))
            elif isinstance(child, ast.ClassDef):
                visit_class(child, name)

    module_funcs = []
    for node in tree.body:
        if isinstance(node, ast.ClassDef):
            visit_class(node, "")
        elif isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            module_funcs.append(method(node, MODULE_SCOPE))
    if module_funcs:
        index.classes.insert(0, ClassInfo(MODULE_SCOPE, 1, index.line_count, module_funcs))
    return index


def parse_source(text: str, path: str) -> FileIndex:
    if path.endswith(PYTHON_SUFFIXES):
        return parse_python(text, path)
    return parse_java(text, path)


def is_source_file(path: str) -> bool:
    return path.endswith(SOURCE_SUFFIXES)


class CodeIndex:
    """Per-file structural index of a project tree, rebuilt when file contents change."""

    def __init__(self, root: Path) -> None:
        self.root = Path(root)
        self._cache: dict[str, tuple[str, FileIndex]] = {}

    def source_files(self) -> list[str]:
        files = []
        for p in self.root.rglob("*"):
            if p.is_file() and is_source_file(p.name):
                rel = p.relative_to(self.root).as_posix()
                if not any(part.startswith(".") or part == "__pycache__" for part in rel.split("/")):
                    files.append(rel)
        return sorted(files)

    def read(self, rel: str) -> str:
        return (self.root / rel).read_text(encoding="utf-8", errors="replace")

    def get(self, rel: str) -> FileIndex:
        text = self.read(rel)
        digest = hashlib.sha1(text.encode("utf-8", "replace")).hexdigest()
        cached = self._cache.get(rel)
        if cached and cached[0] == digest:
            return cached[1]
        fi = parse_source(text, rel)
        self._cache[rel] = (digest, fi)
        return fi

    def invalidate(self) -> None:
        self._cache.clear()

    def all(self) -> list[FileIndex]:
        return [self.get(f) for f in self.source_files()]
