"""Autonomous, LLM-driven program repair with a finite-state tool agent."""

from .agent import RepairSession, SessionConfig, run_repair
from .models import Command, CycleRecord, Location, RepairTask, SessionResult, SessionStatus

__all__ = [
    "Command",
    "CycleRecord",
    "Location",
    "RepairSession",
    "RepairTask",
    "SessionConfig",
    "SessionResult",
    "SessionStatus",
    "run_repair",
]
