"""Parsing and heuristic repair of model replies.

Replies are expected to be a JSON object ``{"thoughts": str, "command":
{"name": str, "args": {...}}}``. Real replies drift: prose around the JSON,
misnamed fields, near-miss tool names, wrong argument names, relative file
paths. Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import PurePosixPath
from typing import Any, Iterable, Sequence

from .fsm import ToolSpec
from .models import ArgsClass, Command, NameClass, ParseClass

DEFAULT_THRESHOLD = 0.1

_THOUGHT_ALIASES = ("thoughts", "thought", "reasoning", "reason", "analysis", "thinking")
_COMMAND_ALIASES = ("command", "cmd", "action", "tool", "tool_call", "function", "function_call")
_NAME_ALIASES = ("name", "tool", "tool_name", "command", "function", "action")
_ARGS_ALIASES = ("args", "arguments", "parameters", "params", "input", "kwargs")


@dataclass
class AgentResponse:
    thoughts: str
    command: Command | None


@dataclass
class RefinementReport:
    parse_class: ParseClass
    name_class: NameClass | None = None
    args_class: ArgsClass | None = None
    final_command: Command | None = None
    thoughts: str = ""
    predicted_name: str | None = None
    diagnostics: list[str] = field(default_factory=list)

    @property
    def outcome_labels(self) -> list[str]:
        labels = []
        if self.name_class is not None:
            labels.append({NameClass.CORRECT: "correct_name", NameClass.MAPPED: "mapped_name",
                           NameClass.NONEXISTENT: "nonexistent"}[self.name_class])
        if self.args_class is not None:
            labels.append({ArgsClass.CORRECT: "correct_args", ArgsClass.REFINED: "refined_args",
                           ArgsClass.UNREFINABLE: "unrefinable_args"}[self.args_class])
        return labels


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def normalized_levenshtein(a: str, b: str) -> float:
    """Edit distance divided by the longer length; 0.0 for two empty strings."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return levenshtein(a, b) / longest


@dataclass
class NameMatch:
    name: str | None
    name_class: NameClass
    diagnostic: str = ""


def match_name(predicted: str, candidates: Iterable[str], threshold: float = DEFAULT_THRESHOLD) -> NameMatch:
    """Map a predicted identifier onto one of ``candidates``.

    Exact match first, then substring containment in either direction
    (case-insensitive), then the strictly closest candidate whose normalized
    Levenshtein distance is below ``threshold``. More than one surviving
    candidate at any step is reported as ambiguous.
    """
    names = list(dict.fromkeys(candidates))
    if not names:
        raise ValueError("no candidate names to match against")
    if predicted in names:
        return NameMatch(predicted, NameClass.CORRECT)
    pred = predicted.strip().lower()
    if not pred:
        return NameMatch(None, NameClass.NONEXISTENT, "empty name")

    folded = [n for n in names if n.lower() == pred]
    if len(folded) == 1:
        return NameMatch(folded[0], NameClass.MAPPED)

    hits = [n for n in names if pred in n.lower() or n.lower() in pred]
    if len(hits) == 1:
        return NameMatch(hits[0], NameClass.MAPPED)
    if len(hits) > 1:
        return NameMatch(None, NameClass.NONEXISTENT,
                         f"'{predicted}' is ambiguous; it could mean any of: {', '.join(hits)}")

    scored = sorted((normalized_levenshtein(pred, n.lower()), n) for n in names)
    close = [(d, n) for d, n in scored if d < threshold]
    if not close:
        return NameMatch(None, NameClass.NONEXISTENT, f"'{predicted}' does not match any known name")
    best = close[0][0]
    tied = [n for d, n in close if d == best]
    if len(tied) > 1:
        return NameMatch(None, NameClass.NONEXISTENT,
                         f"'{predicted}' is ambiguous; it could mean any of: {', '.join(tied)}")
    return NameMatch(tied[0], NameClass.MAPPED)


def map_tool_name(predicted: str, catalog_names: Iterable[str],
                  threshold: float = DEFAULT_THRESHOLD) -> tuple[str | None, NameClass]:
    m = match_name(predicted, catalog_names, threshold)
    return m.name, m.name_class


# ---------------------------------------------------------------- JSON extraction

def _balanced_objects(text: str) -> list[str]:
    """Top-level ``{...}`` spans, string-literal aware."""
    spans = []
    depth = 0
    start = -1
    in_str = False
    esc = False
    for i, ch in enumerate(text):
        if in_str:
            if esc:
                esc = False
            elif ch == "\\":
                esc = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"' and depth > 0:
            in_str = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0:
                spans.append(text[start:i + 1])
    return spans


def extract_json_object(raw: str) -> dict[str, Any] | None:
    """The longest balanced top-level object in ``raw`` that parses as JSON."""
    best: dict[str, Any] | None = None
    best_len = -1
    for span in _balanced_objects(raw):
        try:
            obj = json.loads(span)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict) and len(span) > best_len:
            best, best_len = obj, len(span)
    return best


def _pick(obj: dict[str, Any], aliases: Sequence[str], exclude: Iterable[str] = ()) -> tuple[str | None, Any]:
    excluded = set(exclude)
    for key in aliases:
        if key in obj and key not in excluded:
            return key, obj[key]
    lowered = {k.lower(): k for k in obj if isinstance(k, str) and k not in excluded}
    for key in aliases:
        if key in lowered:
            real = lowered[key]
            return real, obj[real]
    return None, None


def parse_response(raw: str) -> tuple[AgentResponse | None, ParseClass]:
    """Extract the reply's thoughts and command, classifying how much repair it took."""
    obj = extract_json_object(raw)
    if obj is None:
        return None, ParseClass.UNPARSABLE

    exact = (
        isinstance(obj.get("thoughts"), str)
        and isinstance(obj.get("command"), dict)
        and isinstance(obj["command"].get("name"), str)
        and isinstance(obj["command"].get("args"), dict)
    )
    if exact:
        cmd = obj["command"]
        return AgentResponse(obj["thoughts"], Command(cmd["name"], dict(cmd["args"]))), ParseClass.FULLY_PARSABLE

    _, thoughts = _pick(obj, _THOUGHT_ALIASES)
    if isinstance(thoughts, (dict, list)):
        thoughts = json.dumps(thoughts, ensure_ascii=False)
    thoughts = "" if thoughts is None else str(thoughts)

    cmd_key, cmd = _pick(obj, _COMMAND_ALIASES)
    command: Command | None = None
    if isinstance(cmd, dict):
        name_key, name = _pick(cmd, _NAME_ALIASES)
        _, args = _pick(cmd, _ARGS_ALIASES, exclude=[name_key] if name_key else [])
        if isinstance(name, str):
            if args is None:
                args = {k: v for k, v in cmd.items() if k != name_key}
            command = Command(name, args if isinstance(args, dict) else {"_": args})
    elif isinstance(cmd, str):
        # {"command": "read_range", "args": {...}} with args at top level
        _, args = _pick(obj, _ARGS_ALIASES, exclude=[cmd_key] if cmd_key else [])
        command = Command(cmd, args if isinstance(args, dict) else {})
    else:
        _, name = _pick(obj, ("name", "tool_name"))
        if isinstance(name, str):
            _, args = _pick(obj, _ARGS_ALIASES)
            command = Command(name, args if isinstance(args, dict) else {})
    return AgentResponse(thoughts, command), ParseClass.PARTIALLY_PARSABLE


# ---------------------------------------------------------------- arguments

def map_arguments(args: dict[str, Any], tool: ToolSpec,
                  threshold: float = DEFAULT_THRESHOLD) -> tuple[dict[str, Any] | None, ArgsClass, list[str]]:
    """Rename provided argument keys onto the tool's schema."""
    schema_names = tool.arg_names
    mapped: dict[str, Any] = {}
    renamed = False
    problems: list[str] = []
    for key, value in args.items():
        if not schema_names:
            problems.append(f"{tool.name} takes no arguments, got '{key}'")
            continue
        m = match_name(str(key), schema_names, threshold)
        if m.name is None:
            problems.append(f"unknown argument '{key}' for {tool.name}" +
                            (f" ({m.diagnostic})" if "ambiguous" in m.diagnostic else ""))
            continue
        if m.name in mapped:
            problems.append(f"arguments map to '{m.name}' more than once")
            continue
        renamed = renamed or m.name_class is NameClass.MAPPED
        mapped[m.name] = value
    for req in tool.required_args:
        if req not in mapped:
            problems.append(f"missing required argument '{req}' for {tool.name}")
    if problems:
        return None, ArgsClass.UNREFINABLE, problems
    return mapped, (ArgsClass.REFINED if renamed else ArgsClass.CORRECT), []


def resolve_path(predicted: str, workspace_files: Sequence[str]) -> str | None:
    """The unique workspace file whose path ends with ``predicted``'s components."""
    norm = predicted.strip().replace("\\", "/").lstrip("./")
    if not norm:
        return None
    if norm in workspace_files:
        return norm
    parts = PurePosixPath(norm).parts
    hits = [f for f in workspace_files if PurePosixPath(f).parts[-len(parts):] == parts]
    if not hits and len(parts) > 1:
        # leading directories may be wrong; fall back to package+basename suffix
        tail = parts[-2:]
        hits = [f for f in workspace_files if PurePosixPath(f).parts[-len(tail):] == tail]
    if not hits and "/" not in norm and norm.count(".") > 1:
        # dotted class name such as org.jfree.data.time.Week
        for ext in (".java", ".py"):
            dotted = norm.replace(".", "/") + ext
            hits += [f for f in workspace_files if f == dotted or f.endswith("/" + dotted)]
    return hits[0] if len(hits) == 1 else None


def repair_argument_values(args: dict[str, Any], tool: ToolSpec,
                           workspace_files: Sequence[str] | None = None) -> tuple[dict[str, Any], bool]:
    """Best-effort value repair. Returns the new args and whether anything changed."""
    out = dict(args)
    changed = False
    for name, value in args.items():
        kind = tool.arg(name).type
        if kind == "integer" and isinstance(value, str):
            try:
                out[name] = int(value.strip())
                changed = True
            except ValueError:
                pass
        elif kind == "integer" and isinstance(value, float) and value.is_integer():
            out[name] = int(value)
            changed = True
        elif kind == "path" and isinstance(value, str) and workspace_files is not None:
            if value not in workspace_files:
                fixed = resolve_path(value, workspace_files)
                if fixed is not None and fixed != value:
                    out[name] = fixed
                    changed = True
        elif kind == "string_list" and isinstance(value, str):
            try:
                parsed = json.loads(value)
            except json.JSONDecodeError:
                parsed = None
            out[name] = [str(v) for v in parsed] if isinstance(parsed, list) else [value]
            changed = True
        elif kind == "patch" and isinstance(value, str):
            try:
                parsed = json.loads(value)
            except json.JSONDecodeError:
                continue
            out[name] = parsed
            changed = True
        elif kind == "patch" and isinstance(value, dict):
            out[name] = [value]
            changed = True
    return out, changed


# ---------------------------------------------------------------- full pipeline

def refine(raw: str, tools: Sequence[ToolSpec], workspace_files: Sequence[str] | None = None,
           threshold: float = DEFAULT_THRESHOLD) -> RefinementReport:
    """Parse ``raw`` and resolve its command against the currently available ``tools``."""
    response, parse_class = parse_response(raw)
    report = RefinementReport(parse_class)
    if response is None:
        report.diagnostics.append("the response does not contain a JSON object")
        return report
    report.thoughts = response.thoughts
    if response.command is None:
        report.name_class = NameClass.NONEXISTENT
        report.diagnostics.append("the response does not contain a command")
        return report

    report.predicted_name = response.command.name
    by_name = {t.name: t for t in tools}
    m = match_name(response.command.name, list(by_name), threshold)
    report.name_class = m.name_class
    if m.name is None:
        report.diagnostics.append(m.diagnostic)
        return report
    tool = by_name[m.name]

    args, args_class, problems = map_arguments(response.command.args, tool, threshold)
    if args is None:
        report.args_class = args_class
        report.diagnostics.extend(problems)
        return report
    args, changed = repair_argument_values(args, tool, workspace_files)
    if changed:
        args_class = ArgsClass.REFINED
    report.args_class = args_class
    report.final_command = Command(tool.name, args)
    return report


def canonical_args(command: Command) -> str:
    args = command.args
    if command.name == "write_fix" and "changes" in args:
        from .patch import Patch, PatchError

        try:
            args = {**args, "changes": Patch.from_json_obj(args["changes"]).canonical()}
        except PatchError:
            pass
    return json.dumps(args, sort_keys=True, ensure_ascii=False, default=str)


def detect_repetition(command: Command, history: Iterable[Command]) -> bool:
    """True iff an identical command (same tool, structurally equal args) was executed before."""
    key = canonical_args(command)
    return any(h.name == command.name and canonical_args(h) == key for h in history)
