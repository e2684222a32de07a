"""Command line entry point: ``fixloop repair | replay | stats``."""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from collections import Counter
from pathlib import Path
from typing import Any, Sequence

from .agent import SessionConfig, run_repair
from .config import ConfigError, load_config
from .models import SessionResult
from .provider import HttpProvider, LlmProvider, ScriptedProvider, load_transcript, write_transcript

OUTPUT_FILES = ("result.json", "cycles.jsonl", "transcript.jsonl", "final.diff", "session.json")

log = logging.getLogger("fixloop")


def _prepare_out_dir(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in OUTPUT_FILES:
        (out_dir / name).unlink(missing_ok=True)
    for name in ("prompts", "sandbox"):
        if (out_dir / name).exists():
            shutil.rmtree(out_dir / name)


def _write_outputs(out_dir: Path, result: SessionResult, provider: LlmProvider, diff: str) -> None:
    (out_dir / "result.json").write_text(json.dumps(result.to_dict(), indent=1) + "\n", encoding="utf-8")
    write_transcript(provider.transcript, out_dir / "transcript.jsonl")
    (out_dir / "final.diff").write_text(diff, encoding="utf-8")
    if not (out_dir / "cycles.jsonl").exists():
        (out_dir / "cycles.jsonl").write_text("", encoding="utf-8")


def _summary(result: SessionResult) -> str:
    line = (f"status={result.status.value} cycles={result.cycles_used} tokens={result.total_tokens} "
            f"cost=${result.estimated_cost:.4f} plausible_patches={len(result.plausible_patches)}")
    if result.diagnostic:
        line += f"\n{result.diagnostic}"
    return line


def _run(config_path: Path, provider_factory, args: argparse.Namespace) -> tuple[int, LlmProvider | None]:
    try:
        task, settings = load_config(config_path, getattr(args, "budget", None), getattr(args, "max_variants", None))
    except (ConfigError, ValueError) as exc:
        print(str(exc), file=sys.stderr)
        return 1, None
    try:
        provider = provider_factory(settings)
    except (OSError, ValueError) as exc:
        print(f"cannot load provider: {exc}", file=sys.stderr)
        return 1, None
    out_dir = Path(args.out_dir)
    _prepare_out_dir(out_dir)
    config = SessionConfig(out_dir=out_dir, debug_prompts=getattr(args, "debug_prompts", False),
                           sandbox_dir=out_dir / "sandbox", retry_backoff=args.retry_backoff,
                           samples_per_request=settings.samples_per_request)
    result, session = run_repair(task, provider, config)
    diff = session.workspace.diff() if session is not None else ""
    _write_outputs(out_dir, result, provider, diff)
    print(_summary(result))
    return result.exit_code, provider


def cmd_repair(args: argparse.Namespace) -> int:
    def factory(settings):
        if args.transcript:
            return ScriptedProvider.from_file(Path(args.transcript), price_per_million_tokens=settings.price_per_million_tokens)
        return HttpProvider(settings.http, settings.price_per_million_tokens)

    code, _ = _run(Path(args.config), factory, args)
    return code


def cmd_replay(args: argparse.Namespace) -> int:
    transcript = Path(args.transcript)
    try:
        entries = load_transcript(transcript)
    except (OSError, ValueError) as exc:
        print(f"cannot read transcript: {exc}", file=sys.stderr)
        return 1
    if not entries:
        print(f"transcript is empty: {transcript}", file=sys.stderr)
        return 1
    holder: dict[str, ScriptedProvider] = {}

    def factory(settings):
        holder["p"] = ScriptedProvider(entries, price_per_million_tokens=settings.price_per_million_tokens,
                                       check_hashes=True)
        return holder["p"]

    code, _ = _run(Path(args.config), factory, args)
    provider = holder.get("p")
    if provider is None:
        return code
    if provider.divergences:
        print(f"divergence: replay diverged from the recording at cycle {provider.divergences[0]} "
              f"(diverging cycles: {', '.join(map(str, provider.divergences))})")
    else:
        print("replay matches the recording")
    if provider.remaining:
        print(f"note: {provider.remaining} recorded response(s) were not consumed")
    return code


# ---------------------------------------------------------------- stats

def _load_cycles(log_dirs: Sequence[Path]) -> list[list[dict[str, Any]]]:
    sessions = []
    for d in log_dirs:
        d = Path(d)
        files = [d] if d.is_file() else sorted(d.rglob("cycles.jsonl"))
        for f in files:
            rows = [json.loads(l) for l in f.read_text(encoding="utf-8").splitlines() if l.strip()]
            if rows:
                sessions.append(rows)
    return sessions


PARSE_CATEGORIES = ("fully_parsable", "partially_parsable", "unparsable")
NAME_CATEGORIES = ("correct_name", "mapped_name", "nonexistent")
ARGS_CATEGORIES = ("correct_args", "refined_args", "unrefinable_args")


def compute_stats(log_dirs: Sequence[Path]) -> dict[str, Any]:
    sessions = _load_cycles(log_dirs)
    tools: Counter[str] = Counter()
    cats: Counter[str] = Counter()
    cycles = 0
    for rows in sessions:
        for r in rows:
            cycles += 1
            cmd = r.get("executed_command")
            if cmd:
                tools[cmd["name"]] += 1
            cats[r["refinement_outcome"]] += 1
            for label in r.get("command_outcome", []):
                cats[label] += 1

    def group(names: Sequence[str]) -> dict[str, dict[str, float]]:
        total = sum(cats[n] for n in names)
        return {n: {"count": cats[n], "percent": (100.0 * cats[n] / total) if total else 0.0} for n in names}

    return {
        "sessions": len(sessions),
        "cycles": cycles,
        "tools": dict(sorted(tools.items(), key=lambda kv: (-kv[1], kv[0]))),
        "parse": group(PARSE_CATEGORIES),
        "name": group(NAME_CATEGORIES),
        "args": group(ARGS_CATEGORIES),
    }


def format_stats(stats: dict[str, Any]) -> str:
    n = max(stats["sessions"], 1)
    lines = [f"sessions: {stats['sessions']}  cycles: {stats['cycles']}", "",
             f"{'tool':<26}{'invocations':>12}{'per session':>13}"]
    for tool, count in stats["tools"].items():
        lines.append(f"{tool:<26}{count:>12}{count / n:>13.2f}")
    lines += ["", f"{'category':<32}{'count':>7}{'percent':>9}"]
    for group in ("parse", "name", "args"):
        for cat, v in stats[group].items():
            lines.append(f"{group + ': ' + cat:<32}{v['count']:>7}{v['percent']:>8.1f}%")
    return "\n".join(lines) + "\n"


def cmd_stats(args: argparse.Namespace) -> int:
    stats = compute_stats([Path(p) for p in args.log_dirs])
    if stats["cycles"] == 0:
        print("no cycle logs found", file=sys.stderr)
        return 1
    if args.json:
        print(json.dumps(stats, indent=1))
    else:
        print(format_stats(stats), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fixloop", description="Autonomous LLM-driven program repair.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("repair", help="run a repair session")
    p.add_argument("--config", required=True, help="task config JSON")
    p.add_argument("--transcript", help="replay responses from this transcript instead of calling a live model")
    p.add_argument("--budget", type=int, help="cycle budget (default 40)")
    p.add_argument("--max-variants", type=int, dest="max_variants", help="max fix variants per write_fix (default 30)")
    p.add_argument("--out-dir", default="fixloop-out")
    p.add_argument("--debug-prompts", action="store_true", help="dump every rendered prompt")
    p.add_argument("--retry-backoff", type=float, default=1.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("replay", help="re-run a recorded session deterministically")
    p.add_argument("--transcript", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default="fixloop-replay")
    p.add_argument("--retry-backoff", type=float, default=1.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("stats", help="tool usage and output-category statistics over cycle logs")
    p.add_argument("log_dirs", nargs="+")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for attr in ("budget", "max_variants"):
        value = getattr(args, attr, None)
        if value is not None and value < 1:
            print(f"--{attr.replace('_', '-')} must be >= 1", file=sys.stderr)
            return 1
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
