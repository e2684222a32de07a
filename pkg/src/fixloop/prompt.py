"""The eight-section dynamic prompt."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .fsm import AgentState, ToolSpec, available_tools
from .models import Command, RepairTask
from .templates import load_template, section_headers
from .tokens import count_tokens, keep_first_tokens

SECTION_ORDER = (
    "role",
    "goals",
    "guidelines",
    "state_description",
    "available_tools",
    "gathered_information",
    "output_format",
    "last_command_result",
)
STATIC_SECTIONS = frozenset({"role", "goals", "guidelines", "output_format"})
DEFAULT_GATHERED_TOKEN_CAP = 10_000


@dataclass
class PromptSection:
    id: str
    content: str

    @property
    def nature(self) -> str:
        return "static" if self.id in STATIC_SECTIONS else "dynamic"


@dataclass
class GatheredEntry:
    tool: str
    cycle: int
    command: str
    output: str

    def render(self) -> str:
        return f"[cycle {self.cycle}] {self.command}\n{self.output}"


class GatheredInformation:
    """Tool outputs grouped by tool, evicting the oldest entries beyond a token cap."""

    def __init__(self, token_cap: int = DEFAULT_GATHERED_TOKEN_CAP) -> None:
        self.token_cap = token_cap
        self.entries: list[GatheredEntry] = []
        self.evicted = 0

    def add(self, tool: str, cycle: int, command: str, output: str) -> None:
        self.entries.append(GatheredEntry(tool, cycle, command, output))
        self._enforce_cap()

    def subsections(self) -> dict[str, list[GatheredEntry]]:
        groups: dict[str, list[GatheredEntry]] = {}
        for e in self.entries:
            groups.setdefault(e.tool, []).append(e)
        return groups

    def render(self) -> str:
        if not self.entries and not self.evicted:
            return "Nothing has been gathered yet."
        parts = []
        if self.evicted:
            parts.append(f"[... {self.evicted} earlier entr{'y' if self.evicted == 1 else 'ies'} "
                         "elided to fit the context budget ...]")
        for tool, entries in self.subsections().items():
            parts.append(f"### {tool}\n" + "\n\n".join(e.render() for e in entries))
        return "\n\n".join(parts)

    def token_count(self) -> int:
        return count_tokens(self.render())

    def _enforce_cap(self) -> None:
        while len(self.entries) > 1 and self.token_count() > self.token_cap:
            self.entries.pop(0)
            self.evicted += 1
        if self.entries and self.token_count() > self.token_cap:
            # a single oversized entry: keep the longest head that fits
            e = self.entries[0]
            original = e.output
            notice = "[... output truncated to fit the context budget ...]"
            lo, hi = 0, count_tokens(original)
            while lo < hi:
                mid = (lo + hi + 1) // 2
                e.output = keep_first_tokens(original, mid) + "\n" + notice
                if self.token_count() <= self.token_cap:
                    lo = mid
                else:
                    hi = mid - 1
            e.output = keep_first_tokens(original, lo) + "\n" + notice

    def to_dict(self) -> dict:
        return {"token_cap": self.token_cap, "evicted": self.evicted,
                "entries": [e.__dict__ for e in self.entries]}

    @classmethod
    def from_dict(cls, data: dict) -> "GatheredInformation":
        g = cls(int(data.get("token_cap", DEFAULT_GATHERED_TOKEN_CAP)))
        g.evicted = int(data.get("evicted", 0))
        g.entries = [GatheredEntry(**e) for e in data.get("entries", [])]
        return g


@dataclass
class DynamicPrompt:
    sections: list[PromptSection]
    gathered: GatheredInformation = field(default_factory=GatheredInformation)

    def section(self, section_id: str) -> PromptSection:
        for s in self.sections:
            if s.id == section_id:
                return s
        raise KeyError(section_id)

    def set(self, section_id: str, content: str) -> None:
        self.section(section_id).content = content

    def static_digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for s in self.sections:
            if s.id in STATIC_SECTIONS:
                h.update(s.id.encode() + b"\0" + s.content.encode() + b"\0")
        return h.hexdigest()


def detect_language(task: RepairTask) -> str:
    java = sum(1 for _ in task.project_root.rglob("*.java"))
    py = sum(1 for _ in task.project_root.rglob("*.py"))
    return "Python" if py > java else "Java"


def _state_descriptions() -> dict[str, str]:
    out = {}
    for line in load_template("states.txt").splitlines():
        if "=" in line:
            key, _, text = line.partition("=")
            out[key.strip()] = text.strip()
    return out


def render_state(state: AgentState) -> str:
    return _state_descriptions()[state.value]


def render_tools(tools: Sequence[ToolSpec]) -> str:
    if not tools:
        return "No tools are available."
    lines = []
    for t in tools:
        lines.append(f"- {t.signature()}: {t.description}")
        for a in t.args:
            lines.append(f"    {a.name} ({a.type}{'' if a.required else ', optional'}): {a.description}")
    return "\n".join(lines)


def render_last_command(command: Command | None, result: str | None, cycles_used: int, budget: int) -> str:
    left = max(0, budget - cycles_used)
    counter = f"Cycles used: {cycles_used} of {budget}; cycles left: {left}."
    if command is None and result is None:
        return f"No command has been executed yet.\n{counter}"
    cmd_text = command.describe() if command is not None else "(no command was executed)"
    return f"Command: {cmd_text}\nResult:\n{result or ''}\n{counter}"


def initialize_prompt(task: RepairTask, language: str | None = None,
                      gathered_token_cap: int = DEFAULT_GATHERED_TOKEN_CAP) -> DynamicPrompt:
    language = language or detect_language(task)
    failing = ", ".join(task.failing_tests) if task.failing_tests else "(not known; run the tests to find out)"
    role = load_template("role.txt").format(language=language, project=task.project_name, failing_tests=failing)
    skip = load_template("goals_skip_note.txt").rstrip("\n") if task.ground_truth_locations else ""
    goals = load_template("goals.txt").format(skip_note=skip)
    guidelines = load_template("guidelines.txt").format(
        fix_patterns=load_template("fix_patterns.txt").rstrip("\n"), budget=task.cycle_budget)
    state = AgentState.UNDERSTAND
    sections = [
        PromptSection("role", role.strip()),
        PromptSection("goals", goals.strip()),
        PromptSection("guidelines", guidelines.strip()),
        PromptSection("state_description", render_state(state)),
        PromptSection("available_tools", render_tools(available_tools(state))),
        PromptSection("gathered_information", ""),
        PromptSection("output_format", load_template("output_format.txt").strip()),
        PromptSection("last_command_result", render_last_command(None, None, 0, task.cycle_budget)),
    ]
    prompt = DynamicPrompt(sections, GatheredInformation(gathered_token_cap))
    prompt.set("gathered_information", prompt.gathered.render())
    return prompt


def update_after_cycle(prompt: DynamicPrompt, state: AgentState, tools: Sequence[ToolSpec],
                       command: Command | None, result: str, *, cycle_index: int,
                       cycles_used: int, cycle_budget: int, record: bool = True) -> DynamicPrompt:
    """Refresh every dynamic section after a cycle.

    ``record`` appends the result to the gathered information under the
    command's tool; pass False for refusals that executed nothing.
    """
    prompt.set("state_description", render_state(state))
    prompt.set("available_tools", render_tools(tools))
    if command is not None and record:
        prompt.gathered.add(command.name, cycle_index, command.describe(), result)
    prompt.set("gathered_information", prompt.gathered.render())
    prompt.set("last_command_result", render_last_command(command, result, cycles_used, cycle_budget))
    return prompt


def _escape(content: str, headers: set[str]) -> str:
    lines = content.split("\n")
    return "\n".join("\\" + ln if ln.lstrip("\\") in headers else ln for ln in lines)


def render(prompt: DynamicPrompt) -> str:
    headers = section_headers()
    header_set = set(headers.values())
    parts = []
    for s in prompt.sections:
        parts.append(f"{headers[s.id]}\n{_escape(s.content, header_set)}")
    return "\n\n".join(parts) + "\n"
