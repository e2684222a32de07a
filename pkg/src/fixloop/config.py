"""Task configuration files: one JSON object mirroring RepairTask plus provider settings."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .models import DEFAULT_CYCLE_BUDGET, DEFAULT_MAX_FIX_VARIANTS, DEFAULT_TEST_TIMEOUT, Location, RepairTask
from .provider import DEFAULT_PRICE_PER_MILLION, HttpProviderConfig


class ConfigError(ValueError):
    def __init__(self, problems: list[str]) -> None:
        super().__init__("invalid config:\n" + "\n".join(f"  - {p}" for p in problems))
        self.problems = problems


@dataclass
class ProviderSettings:
    http: HttpProviderConfig = field(default_factory=HttpProviderConfig)
    price_per_million_tokens: float = DEFAULT_PRICE_PER_MILLION
    samples_per_request: int | None = None


def _positive_int(data: dict[str, Any], key: str, default: int, problems: list[str]) -> int:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        problems.append(f"{key}: must be a positive integer, got {value!r}")
        return default
    return value


def load_config(path: Path, budget: int | None = None,
                max_variants: int | None = None) -> tuple[RepairTask, ProviderSettings]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"]) from None
    if not isinstance(data, dict):
        raise ConfigError(["config must be a JSON object"])

    problems: list[str] = []
    root_value = data.get("project_root")
    if not isinstance(root_value, str) or not root_value:
        problems.append("project_root: required string")
        project_root = Path(".")
    else:
        project_root = Path(root_value)
        if not project_root.is_absolute():
            project_root = (path.parent / project_root).resolve()
        if not project_root.is_dir():
            problems.append(f"project_root: directory does not exist: {project_root}")

    test_command = data.get("test_command")
    if not isinstance(test_command, str) or not test_command.strip():
        problems.append("test_command: required non-empty string")
        test_command = "true"

    failing = data.get("failing_tests", [])
    if not isinstance(failing, list) or not all(isinstance(t, str) for t in failing):
        problems.append("failing_tests: must be a list of strings")
        failing = []

    locations = None
    if data.get("ground_truth_locations") is not None:
        raw_locs = data["ground_truth_locations"]
        if not isinstance(raw_locs, list):
            problems.append("ground_truth_locations: must be a list of {file, start_line, end_line}")
        else:
            locations = []
            for i, loc in enumerate(raw_locs):
                try:
                    locations.append(Location.from_dict(loc))
                except (KeyError, TypeError, ValueError):
                    problems.append(f"ground_truth_locations[{i}]: needs file, start_line and optional end_line")

    cycle_budget = _positive_int(data, "cycle_budget", DEFAULT_CYCLE_BUDGET, problems)
    max_fix_variants = _positive_int(data, "max_fix_variants", DEFAULT_MAX_FIX_VARIANTS, problems)
    timeout = data.get("test_timeout", DEFAULT_TEST_TIMEOUT)
    if isinstance(timeout, bool) or not isinstance(timeout, (int, float)) or timeout <= 0:
        problems.append(f"test_timeout: must be a positive number, got {timeout!r}")
        timeout = DEFAULT_TEST_TIMEOUT
    framework = data.get("test_framework", "generic")
    if framework not in ("generic", "junit", "unittest", "pytest"):
        problems.append(f"test_framework: unknown framework {framework!r}")
        framework = "generic"

    prov = data.get("provider", {}) or {}
    settings = ProviderSettings()
    if not isinstance(prov, dict):
        problems.append("provider: must be an object")
    else:
        http = HttpProviderConfig()
        for key in ("endpoint", "model", "api_key_env"):
            if key in prov:
                if not isinstance(prov[key], str):
                    problems.append(f"provider.{key}: must be a string")
                else:
                    setattr(http, key, prov[key])
        if prov.get("temperature") is not None:
            if not isinstance(prov["temperature"], (int, float)):
                problems.append("provider.temperature: must be a number")
            else:
                http.temperature = float(prov["temperature"])
        rate = prov.get("price_per_million_tokens", DEFAULT_PRICE_PER_MILLION)
        if isinstance(rate, bool) or not isinstance(rate, (int, float)) or rate < 0:
            problems.append("provider.price_per_million_tokens: must be a non-negative number")
            rate = DEFAULT_PRICE_PER_MILLION
        per_request = prov.get("samples_per_request")
        if per_request is not None and (isinstance(per_request, bool) or not isinstance(per_request, int)
                                        or per_request < 1):
            problems.append(f"provider.samples_per_request: must be a positive integer, got {per_request!r}")
            per_request = None
        settings = ProviderSettings(http, float(rate), per_request)

    if problems:
        raise ConfigError(problems)
    task = RepairTask(
        project_root=project_root,
        test_command=test_command,
        failing_tests=failing,
        ground_truth_locations=locations,
        cycle_budget=budget if budget is not None else cycle_budget,
        max_fix_variants=max_variants if max_variants is not None else max_fix_variants,
        test_timeout=float(timeout),
        test_framework=framework,
    )
    return task, settings
