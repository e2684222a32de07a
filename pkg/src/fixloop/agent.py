"""The repair session: query, refine, execute, update, until done or out of budget."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from . import prompt as prompt_mod
from . import tools
from .codeindex import CodeIndex
from .fsm import AgentState, TransitionError, all_tools, apply_transition, available_tools, get_tool
from .models import (
    Command,
    CycleRecord,
    ParseClass,
    RepairTask,
    SessionResult,
    SessionStatus,
)
from .patch import Patch, PatchError
from .provider import (
    CompletionRequest,
    LlmProvider,
    ProviderError,
    RetryableProviderError,
    estimate_cost,
)
from .refiner import DEFAULT_THRESHOLD, RefinementReport, detect_repetition, refine
from .workspace import (
    FaultLocalizer,
    TestReport,
    ToolError,
    Workspace,
    WorkspaceError,
    run_fault_localization,
    run_tests,
    write_fix,
)

log = logging.getLogger(__name__)

AGENT_MAX_OUTPUT_TOKENS = 2048
# Their effect depends on the current state rather than on their arguments.
REPEATABLE_TOOLS = frozenset({"collect_more_information", "discard_hypothesis", "goal_accomplished"})

FORMAT_REMINDER = (
    "Your reply could not be used. Reply with exactly one JSON object of the form "
    '{"thoughts": "...", "command": {"name": "<tool name>", "args": {...}}} '
    "using one of the available tools."
)


class SessionAborted(Exception):
    pass


@dataclass
class SessionConfig:
    retry_attempts: int = 3
    retry_backoff: float = 1.0
    name_threshold: float = DEFAULT_THRESHOLD
    gathered_token_cap: int = prompt_mod.DEFAULT_GATHERED_TOKEN_CAP
    out_dir: Path | None = None
    debug_prompts: bool = False
    sandbox_dir: Path | None = None
    samples_per_request: int | None = None


@dataclass
class RepairSession:
    task: RepairTask
    provider: LlmProvider
    workspace: Workspace
    config: SessionConfig = field(default_factory=SessionConfig)
    localizer: FaultLocalizer | None = None
    tester: Callable[[Workspace, RepairTask], TestReport] = run_tests

    state: AgentState = AgentState.UNDERSTAND
    cycles_used: int = 0
    records: list[CycleRecord] = field(default_factory=list)
    history: list[Command] = field(default_factory=list)
    plausible_patches: list[Patch] = field(default_factory=list)
    accepted_patch: Patch | None = None
    hypothesis: str | None = None
    last_report: TestReport | None = None
    diagnostic: str | None = None
    language: str = "Java"

    def __post_init__(self) -> None:
        self.language = prompt_mod.detect_language(self.task)
        self.prompt = prompt_mod.initialize_prompt(self.task, self.language, self.config.gathered_token_cap)
        self.index = CodeIndex(self.workspace.root)
        self.aborted = False

    # -- public ---------------------------------------------------------------

    @classmethod
    def start(cls, task: RepairTask, provider: LlmProvider, config: SessionConfig | None = None,
              **kwargs: Any) -> "RepairSession":
        config = config or SessionConfig()
        workspace = Workspace.clone(task.project_root, config.sandbox_dir)
        return cls(task, provider, workspace, config, **kwargs)

    def remaining_budget(self) -> int:
        return self.task.cycle_budget - self.cycles_used

    @property
    def finished(self) -> bool:
        return self.aborted or self.state is AgentState.DONE or self.remaining_budget() <= 0

    def run(self) -> SessionResult:
        while not self.finished:
            self.execute_cycle()
        return self.result()

    def result(self) -> SessionResult:
        if self.state is AgentState.DONE:
            status = SessionStatus.FIXED
        elif self.aborted:
            status = SessionStatus.ABORTED
        else:
            status = SessionStatus.BUDGET_EXHAUSTED
        if status is not SessionStatus.FIXED:
            self.workspace.revert()
        ledger = self.provider.ledger
        return SessionResult(
            status=status,
            cycles_used=self.cycles_used,
            plausible_patches=list(self.plausible_patches),
            accepted_patch=self.accepted_patch if status is SessionStatus.FIXED else None,
            total_tokens=ledger.total_tokens,
            estimated_cost=estimate_cost(ledger),
            diagnostic=self.diagnostic,
        )

    def execute_cycle(self) -> CycleRecord:
        """One cycle: exactly one agent query, then refine, execute and update the prompt."""
        if self.finished:
            raise SessionAborted("the session is over; no cycles left to run")
        cycle = self.cycles_used + 1
        self.provider.current_cycle = cycle
        usage_before = (self.provider.ledger.tokens_in, self.provider.ledger.tokens_out)
        rendered = prompt_mod.render(self.prompt)
        state_before = self.state
        self._dump_prompt(cycle, rendered)

        raw = ""
        executed: Command | None = None
        report: RefinementReport | None = None
        record_gathered = False
        try:
            raw = self._query(rendered)
        except ProviderError as exc:
            self.aborted = True
            self.diagnostic = f"provider failure in cycle {cycle}: {exc}"
            result = f"The model could not be queried: {exc}"
        else:
            report = refine(raw, available_tools(self.state), self.workspace.files(), self.config.name_threshold)
            if report.final_command is None:
                result = self._refinement_failure(report)
            elif report.final_command.name not in REPEATABLE_TOOLS and \
                    detect_repetition(report.final_command, self.history):
                result = (f"You already ran {report.final_command.describe()} in an earlier cycle; "
                          "running it again would give the same result. Choose a different command.")
            else:
                executed = report.final_command
                try:
                    result, record_gathered = self._execute(executed)
                except ProviderError as exc:
                    if isinstance(exc, RetryableProviderError):
                        result = f"The tool could not reach the model: {exc}"
                    else:
                        self.aborted = True
                        self.diagnostic = f"provider failure in cycle {cycle}: {exc}"
                        result = f"The session was aborted: {exc}"
                self.history.append(executed)

        self.cycles_used = cycle
        tools_now = available_tools(self.state)
        prompt_mod.update_after_cycle(
            self.prompt, self.state, tools_now, executed, result,
            cycle_index=cycle, cycles_used=self.cycles_used, cycle_budget=self.task.cycle_budget,
            record=record_gathered)
        tokens_in = self.provider.ledger.tokens_in - usage_before[0]
        tokens_out = self.provider.ledger.tokens_out - usage_before[1]
        record = CycleRecord(
            cycle_index=cycle,
            prompt_rendered=rendered,
            raw_response=raw,
            refinement_outcome=report.parse_class if report else ParseClass.UNPARSABLE,
            command_outcome=report.outcome_labels if report else [],
            executed_command=executed,
            tool_result=result,
            tokens_in=tokens_in,
            tokens_out=tokens_out,
            state_before=state_before.value,
            state_after=self.state.value,
        )
        self.records.append(record)
        self._persist(record)
        return record

    # -- internals ----------------------------------------------------------

    def _query(self, rendered: str) -> str:
        request = CompletionRequest(rendered, max_output_tokens=AGENT_MAX_OUTPUT_TOKENS, purpose="agent")
        from .provider import complete_with_retry

        texts = complete_with_retry(self.provider, request, self.config.retry_attempts, self.config.retry_backoff)
        return texts[0] if texts else ""

    def _refinement_failure(self, report: RefinementReport) -> str:
        reasons = "; ".join(report.diagnostics) or "unknown problem"
        text = f"{FORMAT_REMINDER}\nProblem: {reasons}"
        name = report.predicted_name
        if name and name in {t.name for t in all_tools()} and \
                name not in {t.name for t in available_tools(self.state)}:
            text += (f"\nThe tool '{name}' exists but is not available in the current state "
                     f"({self.state.title}).")
        return text

    def _has_passing_patch(self) -> bool:
        return bool(self.plausible_patches)

    def _execute(self, command: Command) -> tuple[str, bool]:
        """Run one tool. Returns the result text and whether it goes into gathered information."""
        try:
            text = self._dispatch(command)
        except (ToolError, tools.ToolInputError, PatchError, TransitionError) as exc:
            return f"Error: {exc}", False
        except OSError as exc:
            return f"Error: {exc}", False
        try:
            self.state = apply_transition(self.state, command.name, self._has_passing_patch())
        except TransitionError as exc:
            return f"Error: {exc}", False
        if self.state is AgentState.DONE:
            self._finalize_fix()
        return text, True

    def _dispatch(self, c: Command) -> str:
        a = c.args
        ws = self.workspace
        if c.name == "read_range":
            rel = ws.resolve(a["file_path"])
            return f"{rel}\n" + tools.read_range(ws.read_text(rel), int(a["start_line"]), int(a["end_line"]))
        if c.name == "get_classes_and_methods":
            rel = ws.resolve(a["file_path"])
            return tools.render_classes_and_methods(self.index.get(rel))
        if c.name == "extract_method":
            rel = ws.resolve(a["file_path"])
            fi = self.index.get(rel)
            found = tools.extract_method(fi, ws.read_text(rel), str(a["method_name"]))
            return tools.render_extracted(found, fi, str(a["method_name"]))
        if c.name == "extract_tests":
            return self._extract_tests(a.get("failure_report"))
        if c.name == "search_code_base":
            words = a["key_words"]
            if isinstance(words, str):
                words = [words]
            hits = tools.search_code_base(self.index, [str(w) for w in words])
            if not hits:
                return "No matches found."
            return json.dumps(hits, indent=1)
        if c.name == "find_similar_api_calls":
            path = ws.resolve(a["file_path"]) if a.get("file_path") else None
            callee, sites = tools.find_similar_api_calls(self.index, str(a["code_snippet"]), path)
            return tools.render_call_sites(callee, sites)
        if c.name == "generate_method_body":
            rel = ws.resolve(a["file_path"])
            body, _ = tools.generate_method_body(self.provider, self.index.get(rel), ws.read_text(rel),
                                                 str(a["method_signature"]), self.language)
            return body
        if c.name == "run_tests":
            self.last_report = self.tester(ws, self.task)
            return self.last_report.render()
        if c.name == "run_fault_localization":
            return run_fault_localization(ws, self.task, self.localizer)
        if c.name == "write_fix":
            return self._write_fix(a["changes"])
        if c.name == "express_hypothesis":
            self.hypothesis = str(a["hypothesis"])
            return f"Hypothesis recorded: {self.hypothesis}"
        if c.name == "collect_more_information":
            return "Moved back to collecting information."
        if c.name == "discard_hypothesis":
            old, self.hypothesis = self.hypothesis, None
            return f"Hypothesis discarded: {old}" if old else "No hypothesis to discard; back to understanding the bug."
        if c.name == "goal_accomplished":
            if not self._has_passing_patch():
                raise TransitionError(
                    "goal_accomplished rejected: no patch has passed all tests yet. Use write_fix first.")
            return "Goal accomplished. The repair session ends."
        raise ToolError(f"unknown tool {c.name}")

    def _extract_tests(self, report_text: str | None) -> str:
        if report_text is None or not str(report_text).strip():
            if self.last_report is None:
                self.last_report = self.tester(self.workspace, self.task)
            if self.last_report.passed:
                return "The last test run has no failing tests."
            failing = [t for t in self.last_report.failing_tests if not t.startswith("<")]
            report_text = self.last_report.raw_output
        else:
            from .workspace import parse_failing_tests

            report_text = str(report_text)
            failing = parse_failing_tests(report_text, self.task.test_framework)
        if tools.report_is_unidentifiable(report_text, failing):
            return "Could not identify failing tests in the report; here it is unchanged:\n" + report_text
        return tools.render_extracted_tests(tools.extract_tests(report_text, self.index, failing))

    def _write_fix(self, changes: Any) -> str:
        patch = Patch.from_json_obj(changes)
        context = f"Hypothesis: {self.hypothesis}" if self.hypothesis else ""
        attempt = write_fix(self.workspace, patch, self.provider, self.task, self.tester, context,
                            self.config.samples_per_request)
        if attempt.reports:
            self.last_report = attempt.reports[-1]
        if attempt.passing_variant is not None:
            self.plausible_patches.append(attempt.passing_variant)
        return attempt.render()

    def _finalize_fix(self) -> None:
        """Make sure the workspace holds the accepted (latest passing) patch."""
        accepted = self.plausible_patches[-1]
        self.accepted_patch = accepted
        self.workspace.revert()
        self.workspace.apply_patch(accepted)

    # -- persistence --------------------------------------------------------

    def _dump_prompt(self, cycle: int, rendered: str) -> None:
        if self.config.debug_prompts and self.config.out_dir:
            d = Path(self.config.out_dir) / "prompts"
            d.mkdir(parents=True, exist_ok=True)
            (d / f"cycle_{cycle:03d}.txt").write_text(rendered, encoding="utf-8")

    def _persist(self, record: CycleRecord) -> None:
        if not self.config.out_dir:
            return
        out = Path(self.config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "cycles.jsonl", "a", encoding="utf-8") as fh:
            fh.write(record.to_json() + "\n")
        (out / "session.json").write_text(json.dumps(self.snapshot(), indent=1), encoding="utf-8")

    def snapshot(self) -> dict[str, Any]:
        """Everything needed to resume the session from its sandbox directory."""
        return {
            "state": self.state.value,
            "cycles_used": self.cycles_used,
            "history": [c.to_dict() for c in self.history],
            "plausible_patches": [p.to_json_obj() for p in self.plausible_patches],
            "hypothesis": self.hypothesis,
            "gathered": self.prompt.gathered.to_dict(),
            "last_command_result": self.prompt.section("last_command_result").content,
            "workspace": {"root": str(self.workspace.root), "pristine": str(self.workspace.pristine)},
            "tokens": {"in": self.provider.ledger.tokens_in, "out": self.provider.ledger.tokens_out},
            "aborted": self.aborted,
            "diagnostic": self.diagnostic,
        }

    @classmethod
    def resume(cls, task: RepairTask, provider: LlmProvider, out_dir: Path,
               config: SessionConfig | None = None, **kwargs: Any) -> "RepairSession":
        data = json.loads((Path(out_dir) / "session.json").read_text(encoding="utf-8"))
        ws = Workspace(Path(data["workspace"]["root"]), Path(data["workspace"]["pristine"]))
        config = config or SessionConfig(out_dir=Path(out_dir))
        s = cls(task, provider, ws, config, **kwargs)
        s.state = AgentState(data["state"])
        s.cycles_used = int(data["cycles_used"])
        s.history = [Command(c["name"], c["args"]) for c in data["history"]]
        s.plausible_patches = [Patch.from_json_obj(p) for p in data["plausible_patches"]]
        s.hypothesis = data.get("hypothesis")
        s.aborted = bool(data.get("aborted"))
        s.diagnostic = data.get("diagnostic")
        s.prompt.gathered = prompt_mod.GatheredInformation.from_dict(data["gathered"])
        s.prompt.set("state_description", prompt_mod.render_state(s.state))
        s.prompt.set("available_tools", prompt_mod.render_tools(available_tools(s.state)))
        s.prompt.set("gathered_information", s.prompt.gathered.render())
        s.prompt.set("last_command_result", data["last_command_result"])
        s.provider.ledger.tokens_in += int(data["tokens"]["in"])
        s.provider.ledger.tokens_out += int(data["tokens"]["out"])
        cycles = Path(out_dir) / "cycles.jsonl"
        if cycles.exists():
            s.records = [CycleRecord.from_dict(json.loads(l)) for l in cycles.read_text(encoding="utf-8").splitlines()
                         if l.strip()]
        return s


def run_repair(task: RepairTask, provider: LlmProvider, config: SessionConfig | None = None,
               **kwargs: Any) -> tuple[SessionResult, RepairSession | None]:
    """Run a full session. Workspace creation failures yield an aborted result."""
    try:
        session = RepairSession.start(task, provider, config, **kwargs)
    except WorkspaceError as exc:
        return SessionResult(SessionStatus.ABORTED, 0, diagnostic=f"workspace initialization failed: {exc}"), None
    return session.run(), session
