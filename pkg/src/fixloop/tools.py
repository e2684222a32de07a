"""Read, extract, search and generate tools over an indexed project tree."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Sequence

from .codeindex import CodeIndex, FileIndex, MethodInfo, mask_java
from .provider import CompletionRequest, LlmProvider, complete_with_retry
from .templates import load_template
from .tokens import count_tokens, keep_first_tokens, keep_last_tokens

SEARCH_RESULT_CAP = 50
GENERATION_CONTEXT_TOKENS = 12_000
GENERATION_OUTPUT_TOKENS = 4_000


class ToolInputError(ValueError):
    """Arguments are well-formed but cannot be served (the message goes back to the agent)."""


# ---------------------------------------------------------------- reading

def read_range(text: str, start_line: int, end_line: int) -> str:
    if start_line < 1:
        raise ToolInputError(f"start_line must be >= 1, got {start_line}")
    if end_line < start_line:
        raise ToolInputError(f"end_line ({end_line}) must not be smaller than start_line ({start_line})")
    lines = text.splitlines()
    if start_line > len(lines):
        return f"The requested range {start_line}-{end_line} is empty: the file has only {len(lines)} line(s)."
    end = min(end_line, len(lines))
    return "\n".join(f"{n}: {lines[n - 1]}" for n in range(start_line, end + 1))


def classes_and_methods(index: FileIndex) -> dict[str, list[str]]:
    return index.listing()


def render_classes_and_methods(index: FileIndex) -> str:
    if not index.classes:
        out = f"{index.path}: no classes or methods found."
    else:
        out = json.dumps(index.listing(), indent=1)
    if index.warnings:
        out += "\nParse warning (listing may be incomplete): " + "; ".join(index.warnings)
    return out


def method_source(text: str, m: MethodInfo) -> str:
    lines = text.splitlines()
    return "\n".join(lines[m.start_line - 1:m.end_line])


def extract_method(index: FileIndex, text: str, method_name: str) -> list[tuple[MethodInfo, str]]:
    return [(m, method_source(text, m)) for m in index.methods() if m.name == method_name]


def render_extracted(found: list[tuple[MethodInfo, str]], index: FileIndex, method_name: str) -> str:
    if not found:
        names = ", ".join(index.method_names()) or "(none)"
        return f"No method named '{method_name}' in {index.path}. Methods in this file: {names}"
    parts = []
    for m, src in found:
        parts.append(f"// {index.path} lines {m.start_line}-{m.end_line} ({m.class_name})\n{src}")
    return "\n\n".join(parts)


# ---------------------------------------------------------------- failing tests

_NO_FAILURE = re.compile(r"\b(?:0 failures|Failing tests: 0|OK\b|All tests passed|\d+ passed)", re.I)
_FAILURE_WORDS = re.compile(r"fail|error|exception", re.I)


@dataclass
class ExtractedTest:
    identifier: str
    file: str | None
    start_line: int | None
    source: str | None


def extract_tests(report: str, index: CodeIndex, failing: Sequence[str]) -> list[ExtractedTest]:
    """Locate the source of each failing test identifier (``Class#method``)."""
    out = []
    files = index.all()
    for ident in failing:
        cls, _, method = ident.partition("#")
        simple = cls.rsplit(".", 1)[-1]
        hit: ExtractedTest | None = None
        for fi in files:
            for c in fi.classes:
                if c.name.rsplit(".", 1)[-1] != simple and not (c.name == "<module>" and fi.path.endswith(f"{simple}.py")):
                    continue
                for m in c.methods:
                    if m.name == method:
                        text = index.read(fi.path)
                        hit = ExtractedTest(ident, fi.path, m.start_line, method_source(text, m))
                        break
                if hit:
                    break
            if hit:
                break
        out.append(hit or ExtractedTest(ident, None, None, None))
    return out


def report_is_unidentifiable(report: str, failing: Sequence[str]) -> bool:
    if failing:
        return False
    if not report.strip() or _NO_FAILURE.search(report):
        return False
    return bool(_FAILURE_WORDS.search(report))


def render_extracted_tests(tests: list[ExtractedTest]) -> str:
    if not tests:
        return "The report contains no failing tests."
    parts = []
    for t in tests:
        if t.source is None:
            parts.append(f"{t.identifier}: source not found")
        else:
            parts.append(f"{t.identifier} ({t.file}, line {t.start_line}):\n{t.source}")
    return "\n\n".join(parts)


# ---------------------------------------------------------------- search

_SUBTOKEN = re.compile(r"[A-Z]+(?![a-z])|[A-Z]?[a-z]+|\d+")


def split_subtokens(keyword: str) -> list[str]:
    """Split on camel case, underscores, periods and any other non-alphanumerics; lowercase."""
    out = []
    for part in re.split(r"[^A-Za-z0-9]+", keyword):
        out.extend(t.lower() for t in _SUBTOKEN.findall(part))
    return [t for t in out if t]


def query_subtokens(keywords: Sequence[str]) -> list[str]:
    return list(dict.fromkeys(t for k in keywords for t in split_subtokens(k)))


def method_key(m: MethodInfo, siblings: Sequence[MethodInfo]) -> str:
    if sum(1 for s in siblings if s.name == m.name) > 1:
        return f"{m.name} (line {m.start_line})"
    return m.name


def search_code_base(index: CodeIndex, keywords: Sequence[str],
                     cap: int = SEARCH_RESULT_CAP) -> dict[str, dict[str, dict[str, list[str]]]]:
    """Subtoken search over every indexed method.

    Returns ``{file: {class: {method: [matched subtokens]}}}`` for the ``cap``
    methods matching the most distinct subtokens (ties: path, then line).
    """
    if not keywords or not any(k.strip() for k in keywords):
        raise ToolInputError("search_code_base needs a non-empty list of keywords in 'key_words'")
    subtokens = query_subtokens(keywords)
    hits = []
    for fi in index.all():
        text = index.read(fi.path)
        for c in fi.classes:
            for m in c.methods:
                src = method_source(text, m).lower()
                matched = [t for t in subtokens if t in src]
                if matched:
                    hits.append((-len(matched), fi.path, m.start_line, c, m, matched))
    hits.sort(key=lambda h: (h[0], h[1], h[2], h[4].name))
    result: dict[str, dict[str, dict[str, list[str]]]] = {}
    for _, path, _, c, m, matched in hits[:cap]:
        result.setdefault(path, {}).setdefault(c.name, {})[method_key(m, c.methods)] = matched
    return result


_CALL = re.compile(r"(?:\bnew\s+)?([A-Za-z_$][\w$]*)\s*\(")
_CALL_KEYWORDS = {"if", "for", "while", "switch", "catch", "synchronized", "return", "throw",
                  "assert", "super", "this", "print", "elif", "and", "or", "not", "in", "lambda"}


def extract_callee(snippet: str) -> str | None:
    """Name of the first method called in ``snippet``."""
    masked = mask_java(snippet)
    for m in _CALL.finditer(masked):
        name = m.group(1)
        if name not in _CALL_KEYWORDS:
            return name
    return None


@dataclass(frozen=True)
class CallSite:
    file: str
    line: int
    text: str


def _call_extent(masked: str, open_paren: int) -> int:
    depth = 0
    for k in range(open_paren, len(masked)):
        if masked[k] == "(":
            depth += 1
        elif masked[k] == ")":
            depth -= 1
            if depth == 0:
                return k + 1
    return len(masked)


def find_calls(text: str, callee: str, declarations: Sequence[MethodInfo] = ()) -> list[tuple[int, str]]:
    masked = mask_java(text)
    line_starts = [0] + [m.end() for m in re.finditer(r"\n", text)]
    decl_lines = {m.decl_line for m in declarations if m.name == callee}
    pat = re.compile(r"((?:[A-Za-z_$][\w$]*(?:\(\))?\s*\.\s*)*)\b" + re.escape(callee) + r"\s*\(")
    sites = []
    for m in pat.finditer(masked):
        line = _line_of(line_starts, m.start())
        name_at = m.start() + len(m.group(1))
        if not m.group(1) and line in decl_lines:
            before = masked[line_starts[line - 1]:name_at]
            if not re.search(r"(=|return|\(|,|\bnew)\s*$", before):
                continue
        end = _call_extent(masked, m.end() - 1)
        call = " ".join(text[m.start():end].split())
        sites.append((line, call))
    return sites


def _line_of(line_starts: list[int], offset: int) -> int:
    import bisect

    return bisect.bisect_right(line_starts, offset)


def find_similar_api_calls(index: CodeIndex, snippet: str, file_path: str | None = None) -> tuple[str, list[CallSite]]:
    """Callee name extracted from ``snippet`` and every call to a same-named method in scope."""
    callee = extract_callee(snippet)
    if callee is None:
        raise ToolInputError(f"no method call found in the snippet: {snippet!r}")
    files = [file_path] if file_path else index.source_files()
    sites = []
    for f in files:
        text = index.read(f)
        fi = index.get(f)
        for line, call in find_calls(text, callee, fi.methods()):
            sites.append(CallSite(f, line, call))
    return callee, sites


def render_call_sites(callee: str, sites: list[CallSite]) -> str:
    if not sites:
        return f"No calls to '{callee}' found."
    lines = [f"Calls to '{callee}':"]
    lines.extend(f"  {s.file}:{s.line}: {s.text}" for s in sites)
    return "\n".join(lines)


# ---------------------------------------------------------------- generation

def locate_signature(index: FileIndex, text: str, signature: str) -> int:
    """Line number holding ``signature`` in the file; raises ToolInputError when absent."""
    norm = " ".join(signature.replace("{", " ").split())
    name_m = re.search(r"([A-Za-z_$][\w$]*)\s*\(", norm)
    if name_m:
        name = name_m.group(1)
        params = " ".join(norm[name_m.end():].split(")")[0].split())
        candidates = [m for m in index.methods() if m.name == name]
        exact = [m for m in candidates
                 if " ".join(m.signature.split(name + "(", 1)[-1].split(")")[0].split()) == params]
        if exact or candidates:
            return (exact or candidates)[0].decl_line
    for n, line in enumerate(text.splitlines(), 1):
        if norm and norm in " ".join(line.split()):
            return n
    raise ToolInputError(f"signature not found in {index.path}: {signature}")


def generation_context(text: str, signature_line: int, limit: int = GENERATION_CONTEXT_TOKENS) -> str:
    """Code up to and including the signature line, keeping at most ``limit`` trailing tokens."""
    lines = text.splitlines(keepends=True)
    preceding = "".join(lines[:signature_line]).rstrip("\n")
    return keep_last_tokens(preceding, limit)


def generate_method_body(provider: LlmProvider, index: FileIndex, text: str, signature: str,
                         language: str = "Java") -> tuple[str, CompletionRequest]:
    line = locate_signature(index, text, signature)
    context = generation_context(text, line)
    prompt = load_template("method_body.txt").format(language=language, context=context)
    request = CompletionRequest(prompt, max_output_tokens=GENERATION_OUTPUT_TOKENS, purpose="method_body")
    body = complete_with_retry(provider, request, backoff=0.5)[0]
    if count_tokens(body) > GENERATION_OUTPUT_TOKENS:
        body = keep_first_tokens(body, GENERATION_OUTPUT_TOKENS) + \
            f"\n[... generated code truncated at {GENERATION_OUTPUT_TOKENS} tokens ...]"
    return body, request
