"""Core value types shared across the repair loop."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

DEFAULT_CYCLE_BUDGET = 40
DEFAULT_MAX_FIX_VARIANTS = 30
DEFAULT_TEST_TIMEOUT = 300.0


class ParseClass(str, Enum):
    FULLY_PARSABLE = "fully_parsable"
    PARTIALLY_PARSABLE = "partially_parsable"
    UNPARSABLE = "unparsable"


class NameClass(str, Enum):
    CORRECT = "correct"
    MAPPED = "mapped"
    NONEXISTENT = "nonexistent"


class ArgsClass(str, Enum):
    CORRECT = "correct"
    REFINED = "refined"
    UNREFINABLE = "unrefinable"


class SessionStatus(str, Enum):
    FIXED = "fixed"
    BUDGET_EXHAUSTED = "budget_exhausted"
    ABORTED = "aborted"

    @property
    def exit_code(self) -> int:
        return {"fixed": 0, "budget_exhausted": 2, "aborted": 1}[self.value]


@dataclass(frozen=True)
class Location:
    """A buggy region: a file and an inclusive 1-based line range."""

    file: str
    start_line: int
    end_line: int

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Location":
        start = int(data["start_line"])
        return cls(str(data["file"]), start, int(data.get("end_line", start)))


@dataclass
class RepairTask:
    project_root: Path
    test_command: str
    failing_tests: list[str] = field(default_factory=list)
    ground_truth_locations: list[Location] | None = None
    cycle_budget: int = DEFAULT_CYCLE_BUDGET
    max_fix_variants: int = DEFAULT_MAX_FIX_VARIANTS
    test_timeout: float = DEFAULT_TEST_TIMEOUT
    test_framework: str = "generic"

    def __post_init__(self) -> None:
        self.project_root = Path(self.project_root)
        self.validate()

    def validate(self) -> None:
        if self.cycle_budget < 1:
            raise ValueError(f"cycle_budget must be >= 1, got {self.cycle_budget}")
        if self.max_fix_variants < 1:
            raise ValueError(f"max_fix_variants must be >= 1, got {self.max_fix_variants}")
        if not self.project_root.is_dir():
            raise ValueError(f"project_root is not a directory: {self.project_root}")
        if not self.test_command.strip():
            raise ValueError("test_command must not be empty")

    @property
    def project_name(self) -> str:
        return self.project_root.resolve().name


@dataclass(frozen=True)
class Command:
    """One concrete tool invocation proposed by the model."""

    name: str
    args: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "args": self.args}

    def describe(self) -> str:
        return f"{self.name} {json.dumps(self.args, sort_keys=True, ensure_ascii=False)}"


@dataclass
class CycleRecord:
    cycle_index: int
    prompt_rendered: str
    raw_response: str
    refinement_outcome: ParseClass
    command_outcome: list[str]
    executed_command: Command | None
    tool_result: str
    tokens_in: int = 0
    tokens_out: int = 0
    state_before: str = ""
    state_after: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "cycle_index": self.cycle_index,
            "prompt_rendered": self.prompt_rendered,
            "raw_response": self.raw_response,
            "refinement_outcome": self.refinement_outcome.value,
            "command_outcome": list(self.command_outcome),
            "executed_command": self.executed_command.to_dict() if self.executed_command else None,
            "tool_result": self.tool_result,
            "tokens_in": self.tokens_in,
            "tokens_out": self.tokens_out,
            "state_before": self.state_before,
            "state_after": self.state_after,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=False)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CycleRecord":
        cmd = data.get("executed_command")
        return cls(
            cycle_index=int(data["cycle_index"]),
            prompt_rendered=data["prompt_rendered"],
            raw_response=data["raw_response"],
            refinement_outcome=ParseClass(data["refinement_outcome"]),
            command_outcome=list(data.get("command_outcome", [])),
            executed_command=Command(cmd["name"], cmd.get("args", {})) if cmd else None,
            tool_result=data["tool_result"],
            tokens_in=int(data.get("tokens_in", 0)),
            tokens_out=int(data.get("tokens_out", 0)),
            state_before=data.get("state_before", ""),
            state_after=data.get("state_after", ""),
        )


@dataclass
class SessionResult:
    status: SessionStatus
    cycles_used: int
    plausible_patches: list[Any] = field(default_factory=list)
    accepted_patch: Any | None = None
    total_tokens: int = 0
    estimated_cost: float = 0.0
    diagnostic: str | None = None

    @property
    def exit_code(self) -> int:
        return self.status.exit_code

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "cycles_used": self.cycles_used,
            "plausible_patches": [p.to_json_obj() for p in self.plausible_patches],
            "accepted_patch": self.accepted_patch.to_json_obj() if self.accepted_patch else None,
            "total_tokens": self.total_tokens,
            "estimated_cost": round(self.estimated_cost, 6),
            "diagnostic": self.diagnostic,
        }


def jsonable(obj: Any) -> Any:
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")
