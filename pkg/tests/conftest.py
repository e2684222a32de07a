from __future__ import annotations

import shutil
from pathlib import Path

import pytest

FIXTURES = Path(__file__).resolve().parent / "fixtures"
PROJECTS = FIXTURES / "projects"

_ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


class CriterionRecorder:
    """Collects one pass/fail line per acceptance criterion for the terminal summary."""

    def __init__(self, store: dict[int, tuple[str, bool, str]]) -> None:
        self.store = store

    def record(self, number: int, title: str, ok: bool, detail: str = "") -> None:
        self.store[number] = (title, ok, detail)


@pytest.fixture(scope="session")
def criteria() -> CriterionRecorder:
    return CriterionRecorder(_ACCEPTANCE)


@pytest.fixture
def project_copy(tmp_path):
    """Copy a toy project (config, transcript and sources) into a temp dir."""

    def make(name: str) -> Path:
        dest = tmp_path / name
        shutil.copytree(PROJECTS / name, dest)
        return dest

    return make


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[number]
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
