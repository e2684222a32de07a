"""Agent states, the per-state tool catalog, and transitions."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Any


class AgentState(str, Enum):
    UNDERSTAND = "understand_the_bug"
    COLLECT = "collect_information"
    TRY_TO_FIX = "try_to_fix"
    DONE = "done"

    @property
    def title(self) -> str:
        return _catalog_data()["states"][self.value]


INITIAL_STATE = AgentState.UNDERSTAND


@dataclass(frozen=True)
class ArgSpec:
    name: str
    type: str
    required: bool = True
    description: str = ""


@dataclass(frozen=True)
class ToolSpec:
    name: str
    category: str
    description: str
    args: tuple[ArgSpec, ...]
    states: frozenset[AgentState]

    @property
    def arg_names(self) -> list[str]:
        return [a.name for a in self.args]

    @property
    def required_args(self) -> list[str]:
        return [a.name for a in self.args if a.required]

    def arg(self, name: str) -> ArgSpec:
        for a in self.args:
            if a.name == name:
                return a
        raise KeyError(name)

    def signature(self) -> str:
        parts = []
        for a in self.args:
            opt = "" if a.required else "?"
            parts.append(f"{a.name}{opt}: {a.type}")
        return f"{self.name}({', '.join(parts)})"


class TransitionError(Exception):
    """A control command was refused; the message is fed back to the agent."""


@lru_cache(maxsize=None)
def _catalog_data() -> dict[str, Any]:
    text = resources.files("fixloop").joinpath("data/tool_catalog.json").read_text(encoding="utf-8")
    return json.loads(text)


@lru_cache(maxsize=None)
def all_tools() -> tuple[ToolSpec, ...]:
    tools = []
    for t in _catalog_data()["tools"]:
        tools.append(
            ToolSpec(
                name=t["name"],
                category=t["category"],
                description=t["description"],
                args=tuple(ArgSpec(a["name"], a["type"], a.get("required", True), a.get("description", ""))
                           for a in t["args"]),
                states=frozenset(AgentState(s) for s in t["states"]),
            )
        )
    return tuple(tools)


def tool_names() -> list[str]:
    return [t.name for t in all_tools()]


def get_tool(name: str) -> ToolSpec:
    for t in all_tools():
        if t.name == name:
            return t
    raise KeyError(name)


def available_tools(state: AgentState) -> list[ToolSpec]:
    """Tools invocable in ``state``, in catalog order. Empty once done."""
    if state is AgentState.DONE:
        return []
    return [t for t in all_tools() if state in t.states]


def apply_transition(state: AgentState, command_name: str, has_passing_patch: bool = False) -> AgentState:
    """Next state after ``command_name`` executed successfully in ``state``.

    Raises TransitionError when goal_accomplished is requested before any
    patch passed the full test suite.
    """
    if state is AgentState.DONE:
        raise TransitionError("the repair session is already finished")
    if command_name == "express_hypothesis":
        return AgentState.COLLECT
    if command_name == "write_fix":
        return AgentState.TRY_TO_FIX
    if command_name == "collect_more_information":
        return AgentState.COLLECT
    if command_name == "discard_hypothesis":
        return AgentState.UNDERSTAND
    if command_name == "goal_accomplished":
        if not has_passing_patch:
            raise TransitionError(
                "goal_accomplished rejected: no patch has passed all tests yet. "
                "Use write_fix to propose a fix first."
            )
        return AgentState.DONE
    return state


def export_catalog() -> list[dict[str, Any]]:
    """Machine-readable catalog: one row per tool with its states and arguments."""
    rows = []
    for t in all_tools():
        rows.append({
            "name": t.name,
            "category": t.category,
            "states": sorted(s.value for s in t.states),
            "args": [{"name": a.name, "type": a.type, "required": a.required} for a in t.args],
        })
    return rows


def catalog_markdown() -> str:
    states = [AgentState.UNDERSTAND, AgentState.COLLECT, AgentState.TRY_TO_FIX]
    lines = ["| tool | " + " | ".join(s.value for s in states) + " | arguments |",
             "|---" * (len(states) + 2) + "|"]
    for t in all_tools():
        marks = ["x" if s in t.states else "" for s in states]
        lines.append(f"| {t.name} | " + " | ".join(marks) + f" | {', '.join(t.arg_names)} |")
    return "\n".join(lines) + "\n"
