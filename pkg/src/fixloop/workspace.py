"""Sandboxed project copy: patching, reverting, testing, localization, fix validation."""

from __future__ import annotations

import difflib
import filecmp
import json
import logging
import os
import re
import shutil
import signal
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

from .models import Location, RepairTask
from .patch import FileEdit, Patch, PatchError, apply_to_lines
from .provider import (
    CompletionRequest,
    LlmProvider,
    ProviderError,
    TranscriptExhausted,
    complete_with_retry,
)
from .refiner import extract_json_object, resolve_path
from .templates import load_template

log = logging.getLogger(__name__)

_SKIP_DIRS = {"__pycache__", ".pytest_cache", ".git"}


class WorkspaceError(Exception):
    """The sandbox could not be created or restored."""


class ToolError(Exception):
    """A tool call failed in a way the agent should be told about."""


class Workspace:
    """A working copy of the project plus an untouched pristine copy."""

    def __init__(self, root: Path, pristine: Path) -> None:
        self.root = Path(root)
        self.pristine = Path(pristine)
        self.generation = 0

    @classmethod
    def clone(cls, project_root: Path, base_dir: Path | None = None) -> "Workspace":
        """Copy ``project_root`` into an isolated directory and keep a pristine snapshot."""
        project_root = Path(project_root)
        if not project_root.is_dir():
            raise WorkspaceError(f"project root is not a directory: {project_root}")
        if base_dir is None:
            base_dir = Path(tempfile.mkdtemp(prefix="fixloop-"))
        else:
            base_dir = Path(base_dir)
            if base_dir.exists():
                shutil.rmtree(base_dir)
            base_dir.mkdir(parents=True)
        root, pristine = base_dir / "work", base_dir / "pristine"
        ignore = shutil.ignore_patterns(*_SKIP_DIRS)
        try:
            shutil.copytree(project_root, pristine, ignore=ignore, symlinks=True)
            shutil.copytree(pristine, root, symlinks=True)
        except OSError as exc:
            raise WorkspaceError(f"could not clone {project_root}: {exc}") from exc
        return cls(root, pristine)

    # -- files ---------------------------------------------------------------

    def files(self) -> list[str]:
        out = []
        for p in self.root.rglob("*"):
            rel = p.relative_to(self.root)
            if any(part in _SKIP_DIRS for part in rel.parts):
                continue
            if p.is_file():
                out.append(rel.as_posix())
        return sorted(out)

    def resolve(self, file_path: str) -> str:
        """Relative path of an existing workspace file, repairing near-miss paths."""
        rel = file_path.strip().replace("\\", "/")
        if rel.startswith(str(self.root)):
            rel = rel[len(str(self.root)):]
        rel = rel.lstrip("/")
        candidate = (self.root / rel).resolve()
        if candidate.is_file() and candidate.is_relative_to(self.root.resolve()):
            return candidate.relative_to(self.root.resolve()).as_posix()
        fixed = resolve_path(rel, self.files())
        if fixed is None:
            hint = self.suggest(rel)
            raise ToolError(f"file not found: {file_path}" + (f". Did you mean {hint}?" if hint else ""))
        return fixed

    def suggest(self, file_path: str) -> str | None:
        files = self.files()
        base = file_path.rsplit("/", 1)[-1]
        same_base = [f for f in files if f.rsplit("/", 1)[-1] == base]
        if same_base:
            return ", ".join(same_base[:5])
        close = difflib.get_close_matches(file_path, files, n=1, cutoff=0.5)
        return close[0] if close else None

    def read_text(self, rel: str) -> str:
        return (self.root / rel).read_text(encoding="utf-8", errors="replace")

    # -- patching ------------------------------------------------------------

    def apply_patch(self, patch: Patch) -> Patch:
        """Apply ``patch`` to the working copy atomically.

        Returns the patch with file paths resolved against the workspace.
        Raises PatchError (nothing written) on any conflict or range error.
        """
        problems: list[str] = []
        staged: dict[str, str] = {}
        resolved: list[FileEdit] = []
        for edit in patch.files:
            try:
                rel = self.resolve(edit.file_path)
            except ToolError as exc:
                problems.append(str(exc))
                continue
            if rel in staged:
                problems.append(f"{rel}: appears more than once in the patch")
                continue
            fixed = FileEdit(rel, list(edit.insertions), list(edit.deletions), list(edit.modifications))
            lines = (self.root / rel).read_bytes().decode("utf-8", errors="surrogateescape").splitlines(keepends=True)
            try:
                staged[rel] = "".join(apply_to_lines(lines, fixed))
            except PatchError as exc:
                problems.append(str(exc))
                continue
            resolved.append(fixed)
        if problems:
            raise PatchError("; ".join(problems))
        for rel, text in staged.items():
            (self.root / rel).write_bytes(text.encode("utf-8", errors="surrogateescape"))
        self.generation += 1
        return Patch(resolved)

    def revert(self) -> None:
        """Restore the working copy byte-for-byte from the pristine snapshot."""
        changed = False
        for p in sorted(self.root.rglob("*"), key=lambda p: len(p.parts), reverse=True):
            rel = p.relative_to(self.root)
            twin = self.pristine / rel
            if p.is_symlink() or p.is_file():
                if not (twin.is_file() or twin.is_symlink()):
                    p.unlink()
                    changed = True
            elif p.is_dir() and not twin.is_dir():
                shutil.rmtree(p)
                changed = True
        for src in self.pristine.rglob("*"):
            rel = src.relative_to(self.pristine)
            dst = self.root / rel
            if src.is_dir() and not src.is_symlink():
                dst.mkdir(parents=True, exist_ok=True)
            elif not dst.exists() or not filecmp.cmp(src, dst, shallow=False):
                dst.parent.mkdir(parents=True, exist_ok=True)
                shutil.copy2(src, dst, follow_symlinks=False)
                changed = True
        if changed:
            self.generation += 1

    def changed_files(self) -> list[str]:
        """Relative paths whose bytes differ from the pristine snapshot (incl. added/removed)."""
        ours = {p.relative_to(self.root).as_posix() for p in self.root.rglob("*") if p.is_file()}
        theirs = {p.relative_to(self.pristine).as_posix() for p in self.pristine.rglob("*") if p.is_file()}
        diffs = sorted(ours ^ theirs)
        for rel in sorted(ours & theirs):
            if not filecmp.cmp(self.root / rel, self.pristine / rel, shallow=False):
                diffs.append(rel)
        return sorted(diffs)

    def is_pristine(self) -> bool:
        return not self.changed_files()

    def diff(self) -> str:
        """Unified diff of source changes against the pristine snapshot."""
        chunks = []
        for rel in self.changed_files():
            if any(part in _SKIP_DIRS for part in rel.split("/")):
                continue
            a, b = self.pristine / rel, self.root / rel
            old = a.read_text(encoding="utf-8", errors="replace").splitlines(keepends=True) if a.exists() else []
            new = b.read_text(encoding="utf-8", errors="replace").splitlines(keepends=True) if b.exists() else []
            for line in difflib.unified_diff(old, new, f"a/{rel}", f"b/{rel}"):
                chunks.append(line if line.endswith("\n") else line + "\n\\ No newline at end of file\n")
        return "".join(chunks)


# ---------------------------------------------------------------- test reports

_FAILURE_PATTERNS: dict[str, list[str]] = {
    "junit": [
        r"^\s*\d+\)\s+(?P<method>[\w$]+)\((?P<cls>[\w.$]+)\)",
        r"^\s*-\s+(?P<cls>[\w.$]+)::(?P<method>[\w$]+)",
        r"^\s*(?:\[junit\]\s+)?Testcase:\s+(?P<method>[\w$]+)\((?P<cls>[\w.$]+)\):\s+(?:FAILED|Caused an ERROR)",
        r"^(?P<method>[\w$]+)\((?P<cls>[\w.$]+)\)\s+Time elapsed.*<<<\s+(?:FAILURE|ERROR)!",
        r"^\[ERROR\]\s+(?P<cls>[\w.$]+)\.(?P<method>[\w$]+):\d+",
    ],
    "unittest": [
        r"^(?:FAIL|ERROR): (?P<method>\w+) \((?P<cls>[\w.]+)\)",
    ],
    "pytest": [
        r"^(?:FAILED|ERROR) (?P<path>[^\s:]+)::(?:(?P<cls>\w+)::)?(?P<method>[\w\[\]-]+)",
    ],
    "generic": [
        r"(?P<cls>\b[A-Za-z_$][\w.$]*)#(?P<method>[\w$]+)\b",
    ],
}

_DURATIONS = [
    (re.compile(r"(Ran \d+ tests? in )[\d.]+s"), r"\1<t>s"),
    (re.compile(r"(Time elapsed: )[\d.,]+ ?(sec|s)\b"), r"\1<t> \2"),
    (re.compile(r"(\bTime: )[\d.,]+"), r"\1<t>"),
    (re.compile(r"(Total time: )[\d.,]+ (\w+)"), r"\1<t> \2"),
    (re.compile(r"(\bin )[\d.]+s\b"), r"\1<t>s"),
]

_JAVA_FRAME = re.compile(r"^\s*at\s+(?P<fqn>[\w$.<>/]+)\((?P<src>[^)]*)\)\s*$")
_PY_FRAME = re.compile(r'^\s*File "(?P<path>[^"]+)", line \d+')


def parse_failing_tests(output: str, framework: str = "generic") -> list[str]:
    """Failing test identifiers as ``Class#method`` in report order."""
    names = list(_FAILURE_PATTERNS) if framework == "generic" else [framework, "generic"]
    found: list[str] = []
    for line in output.splitlines():
        for fw in names:
            for pat in _FAILURE_PATTERNS.get(fw, []):
                m = re.search(pat, line)
                if not m:
                    continue
                method = m.group("method")
                cls = m.groupdict().get("cls")
                if cls and cls.endswith("." + method):
                    cls = cls[: -len(method) - 1]
                if not cls:
                    path = m.groupdict().get("path") or ""
                    cls = Path(path).stem
                ident = f"{cls}#{method}"
                if ident not in found:
                    found.append(ident)
                break
            else:
                continue
            break
    return found


def _java_frame_in_project(fqn: str, src: str, project_files: Sequence[str]) -> bool:
    cls = fqn.rsplit(".", 1)[0] if "." in fqn else fqn
    cls = cls.split("$", 1)[0]
    fname = src.split(":", 1)[0].strip()
    ext = Path(fname).suffix if "." in fname else ".java"
    rel = cls.replace(".", "/") + ext
    if any(f == rel or f.endswith("/" + rel) for f in project_files):
        return True
    # default package or mismatched layout: fall back to the file name
    if fname and "." in fname and "/" not in cls:
        return any(f.rsplit("/", 1)[-1] == fname for f in project_files)
    return False


def clean_test_output(output: str, roots: Sequence[Path], project_files: Sequence[str]) -> str:
    """Drop stack frames outside the project, relativize paths, neutralize timings."""
    roots = [Path(r).resolve() for r in roots]
    root_strs = sorted({str(r) for r in roots} | {str(Path(r)) for r in roots}, key=len, reverse=True)
    out: list[str] = []
    omitted = 0
    lines = output.splitlines()
    i = 0

    def flush() -> None:
        nonlocal omitted
        if omitted:
            out.append(f"    [... {omitted} frame(s) outside the project omitted]")
            omitted = 0

    while i < len(lines):
        line = lines[i]
        jm = _JAVA_FRAME.match(line)
        pm = _PY_FRAME.match(line)
        if jm:
            if _java_frame_in_project(jm.group("fqn"), jm.group("src"), project_files):
                flush()
                out.append(line)
            else:
                omitted += 1
            i += 1
            continue
        if pm:
            path = Path(pm.group("path"))
            inside = False
            if path.is_absolute():
                try:
                    resolved = path.resolve()
                    inside = any(resolved.is_relative_to(r) for r in roots)
                except OSError:
                    inside = False
            else:
                inside = path.as_posix() in project_files
            # the frame's source line follows when it is indented deeper
            span = 1
            if i + 1 < len(lines) and lines[i + 1].startswith("    ") and not _PY_FRAME.match(lines[i + 1]) \
                    and len(lines[i + 1]) - len(lines[i + 1].lstrip()) > len(line) - len(line.lstrip()):
                span = 2
                while i + span < len(lines) and re.match(r"^\s+[~^ ]+$", lines[i + span]):
                    span += 1
            if inside:
                flush()
                out.extend(lines[i:i + span])
            else:
                omitted += 1
            i += span
            continue
        flush()
        out.append(line)
        i += 1
    flush()
    text = "\n".join(out)
    for r in root_strs:
        text = text.replace(r + os.sep, "").replace(r, ".")
    for pat, repl in _DURATIONS:
        text = pat.sub(repl, text)
    return text


@dataclass
class TestReport:
    __test__ = False  # not a pytest test class

    passed: bool
    failing_tests: list[str]
    cleaned_output: str
    raw_output: str
    exit_code: int | None = None
    timed_out: bool = False

    def summary(self) -> str:
        if self.passed:
            return "All tests passed."
        head = "Tests timed out." if self.timed_out else f"{len(self.failing_tests)} failing test(s):"
        return head + "".join(f"\n  - {t}" for t in self.failing_tests)

    def render(self) -> str:
        return f"{self.summary()}\n\n{self.cleaned_output.strip()}".rstrip()


def run_tests(workspace: Workspace, task: RepairTask) -> TestReport:
    """Run the task's test command in the sandbox and parse the outcome."""
    env = dict(os.environ)
    env["PYTHONDONTWRITEBYTECODE"] = "1"
    proc = subprocess.Popen(
        task.test_command, shell=True, cwd=workspace.root, env=env,
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, start_new_session=True,
    )
    timed_out = False
    try:
        raw_bytes, _ = proc.communicate(timeout=task.test_timeout)
    except subprocess.TimeoutExpired:
        timed_out = True
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        raw_bytes, _ = proc.communicate()
    raw = raw_bytes.decode("utf-8", errors="replace")
    code = proc.returncode
    if not timed_out and code == 127 and "not found" in raw:
        raise ToolError(f"test command could not be started: {raw.strip()[:300]}")

    roots = [workspace.root, workspace.pristine, task.project_root]
    files = workspace.files()
    cleaned = clean_test_output(raw, roots, files)
    failing = parse_failing_tests(raw, task.test_framework)
    if timed_out:
        cleaned = f"[test run exceeded the {task.test_timeout:g}s timeout and was killed]\n" + cleaned
        if not failing:
            failing = ["<timeout>"]
    elif code != 0 and not failing:
        failing = [f"<unidentified failure: exit status {code}>"]
    passed = not timed_out and code == 0 and not failing
    return TestReport(passed, failing, cleaned, raw, code, timed_out)


# ---------------------------------------------------------------- fault localization

class FaultLocalizer(Protocol):
    def localize(self, workspace: Workspace, task: RepairTask) -> list[tuple[str, int, float]]:
        """Ranked (file, line, suspiciousness) triples."""
        ...


def format_locations(locations: Sequence[Location]) -> str:
    lines = ["Buggy locations (perfect fault localization):"]
    for loc in locations:
        rng = f"line {loc.start_line}" if loc.start_line == loc.end_line else f"lines {loc.start_line}-{loc.end_line}"
        lines.append(f"  - {loc.file}: {rng}")
    return "\n".join(lines)


def run_fault_localization(workspace: Workspace, task: RepairTask,
                           localizer: FaultLocalizer | None = None, top: int = 20) -> str:
    if task.ground_truth_locations:
        return format_locations(task.ground_truth_locations)
    if localizer is None:
        return "No fault localization information is available for this bug; locate it by running the tests and reading the failing test code."
    try:
        ranked = localizer.localize(workspace, task)
    except Exception as exc:  # adapters are third-party code
        return f"Fault localization failed ({exc}); continue without it."
    if not ranked:
        return "The fault localization tool returned no suspicious lines."
    ranked = sorted(ranked, key=lambda r: (-r[2], r[0], r[1]))[:top]
    lines = ["Suspicious lines ranked by fault localization score:"]
    for rank, (f, line, score) in enumerate(ranked, 1):
        lines.append(f"  {rank}. {f}:{line} (score {score:.4f})")
    return "\n".join(lines)


# ---------------------------------------------------------------- write_fix

@dataclass
class FixAttempt:
    patch: Patch
    variants_tested: int = 0
    passing_variant: Patch | None = None
    reports: list[TestReport] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def render(self) -> str:
        lines = []
        lines.extend(self.notes)
        if self.passing_variant is not None:
            idx = len(self.reports)
            which = "your patch" if idx == 1 else f"variant {idx} of your patch"
            lines.append(f"The fix was applied: {which} passes all tests ({self.variants_tested} variant(s) tested).")
            if idx > 1:
                lines.append("Applied variant:\n" + json.dumps(self.passing_variant.to_json_obj(), indent=1))
            lines.append("If you are confident in this fix, call goal_accomplished.")
        else:
            lines.append(f"The fix failed: none of the {self.variants_tested} tested variant(s) passes all tests. "
                         "The changes were reverted.")
            if self.reports:
                lines.append("Test results for your patch:\n" + self.reports[0].render())
        return "\n".join(lines)


def parse_variant_texts(texts: Sequence[str]) -> list[Patch]:
    """Patches found in sampled completions; malformed ones are dropped."""
    patches: list[Patch] = []
    for text in texts:
        candidates: list = []
        obj = None
        stripped = text.strip()
        for attempt in (stripped, _bracketed(stripped)):
            if attempt is None:
                continue
            try:
                obj = json.loads(attempt)
                break
            except json.JSONDecodeError:
                continue
        if obj is None:
            obj = extract_json_object(text)
        if isinstance(obj, dict):
            for key in ("variants", "patches"):
                if isinstance(obj.get(key), list):
                    candidates.extend(obj[key])
                    break
            else:
                candidates.append(obj.get("changes", obj))
        elif isinstance(obj, list):
            if obj and all(isinstance(x, list) for x in obj):
                candidates.extend(obj)
            else:
                candidates.append(obj)
        for c in candidates:
            try:
                p = Patch.from_json_obj(c)
            except PatchError:
                continue
            if not p.is_empty():
                patches.append(p)
    return patches


def _bracketed(text: str) -> str | None:
    a, b = text.find("["), text.rfind("]")
    return text[a:b + 1] if 0 <= a < b else None


def sample_variants(patch: Patch, provider: LlmProvider, count: int, context: str = "",
                    per_request: int | None = None) -> tuple[list[Patch], str]:
    """Ask for ``count`` rewrites of ``patch``.

    By default one multi-sample request is sent; ``per_request`` splits the
    sampling into several requests of at most that many samples each.
    """
    template = load_template("variants.txt")
    prompt = template.format(
        count=count,
        patch=json.dumps(patch.to_json_obj(), indent=1, ensure_ascii=False),
        context=context or "(none)",
    )
    step = count if per_request is None else max(1, per_request)
    texts: list[str] = []
    remaining = count
    while remaining > 0:
        n = min(step, remaining)
        req = CompletionRequest(prompt, max_output_tokens=4000, sampling_count=n, purpose="variants")
        try:
            texts += complete_with_retry(provider, req, backoff=0.5)
        except TranscriptExhausted:
            raise
        except ProviderError as exc:
            return parse_variant_texts(texts), f"Variant sampling failed ({exc}); only the patches received were tested."
        remaining -= n
    return parse_variant_texts(texts), ""


def write_fix(workspace: Workspace, patch: Patch, provider: LlmProvider | None, task: RepairTask,
              tester=run_tests, context: str = "", samples_per_request: int | None = None) -> FixAttempt:
    """Validate ``patch`` and up to ``max_fix_variants - 1`` sampled rewrites.

    The workspace starts from the pristine snapshot for every variant. The
    first variant passing all tests stays applied; otherwise the workspace
    ends pristine. Raises PatchError if ``patch`` itself cannot be applied.
    """
    attempt = FixAttempt(patch)
    workspace.revert()
    seen: set[str] = set()

    def try_variant(p: Patch) -> bool:
        key = p.canonical_key()
        if key in seen or attempt.variants_tested >= task.max_fix_variants:
            return False
        seen.add(key)
        workspace.revert()
        try:
            applied = workspace.apply_patch(p)
        except PatchError:
            if attempt.variants_tested == 0:
                raise
            return False
        attempt.variants_tested += 1
        report = tester(workspace, task)
        attempt.reports.append(report)
        if report.passed:
            attempt.passing_variant = applied
            return True
        workspace.revert()
        return False

    if patch.is_empty():
        raise PatchError("the patch contains no edits")
    if patch.conflicts():
        raise PatchError("; ".join(patch.conflicts()))
    if try_variant(patch):
        return attempt
    if task.max_fix_variants > 1 and provider is not None:
        variants, note = sample_variants(patch, provider, task.max_fix_variants - 1, context, samples_per_request)
        if note:
            attempt.notes.append(note)
        for v in variants:
            if attempt.variants_tested >= task.max_fix_variants:
                break
            if try_variant(v):
                return attempt
    workspace.revert()
    return attempt
