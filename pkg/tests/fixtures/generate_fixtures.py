"""Regenerate the scripted transcripts, configs and golden diffs for the toy projects.

Run from this directory: ``python3 generate_fixtures.py``. Golden diffs are
computed with difflib from hand-written fixed sources, independently of the
patch engine.
"""

from __future__ import annotations

import difflib
import json
from pathlib import Path

HERE = Path(__file__).resolve().parent
PROJECTS = HERE / "projects"
TEST_COMMAND = "python3 -m unittest discover -s tests -t ."


def response(thoughts, name, args):
    return json.dumps({"thoughts": thoughts, "command": {"name": name, "args": args}})


def entry(text, cycle):
    return {"cycle": cycle, "purpose": "agent", "response_text": text}


def golden(project: Path, fixed: dict[str, str]) -> str:
    out = []
    for rel in sorted(fixed):
        old = (project / rel).read_text().splitlines(keepends=True)
        new = fixed[rel].splitlines(keepends=True)
        out.extend(difflib.unified_diff(old, new, f"a/{rel}", f"b/{rel}"))
    return "".join(out)


CASES = {
    "single_line": {
        "project": "statlib",
        "failing": ["tests.test_stats.StatsTest#test_mean"],
        "locations": [{"file": "statlib/stats.py", "start_line": 6, "end_line": 6}],
        "steps": [
            response("Start by running the tests to see the failure.", "run_tests", {}),
            response("Ask where the bug is.", "run_fault_localization", {}),
            response("Read the mean function.", "read_range",
                     {"file_path": "statlib/stats.py", "start_line": 1, "end_line": 6}),
            response("The divisor is off by one.", "express_hypothesis",
                     {"hypothesis": "mean divides by len(values) - 1 instead of len(values)"}),
            response("Fix the divisor.", "write_fix", {"changes": [{
                "file_path": "statlib/stats.py", "insertions": [], "deletions": [],
                "modifications": [{"line_number": 6, "modified_line": "    return total / len(values)\n"}]}]}),
            response("The tests pass.", "goal_accomplished", {"reason": "all tests pass"}),
        ],
        "fixed": {"statlib/stats.py": (
            'def mean(values):\n'
            '    """Arithmetic mean of a non-empty sequence."""\n'
            '    total = 0\n'
            '    for v in values:\n'
            '        total += v\n'
            '    return total / len(values)\n'
            '\n\n'
            'def spread(values):\n'
            '    return max(values) - min(values)\n')},
    },
    "multi_line": {
        "project": "rangekit",
        "failing": ["tests.test_bounds.BoundsTest#test_clamp_below",
                    "tests.test_bounds.BoundsTest#test_clamp_above"],
        "locations": [{"file": "rangekit/bounds.py", "start_line": 5, "end_line": 8}],
        "steps": [
            # sloppy model output: the refiner has to repair name, argument key and value types
            "I'll run the tests first.\n" + response("Run the tests.", "Run_Tests", {}),
            response("Where is the bug?", "run_fault_localization", {}),
            response("Read clamp.", "read_rang", {"path": "bounds.py", "start_line": "1", "end_line": "9"}),
            response("The two branches return the wrong bound.", "express_hypothesis",
                     {"hypothesis": "clamp returns high for small values and low for large ones"}),
            response("Swap the returned bounds.", "write_fix", {"changes": json.dumps([{
                "file_path": "rangekit/bounds.py", "insertions": [], "deletions": [],
                "modifications": [{"line_number": 8, "modified_line": "        return high\n"},
                                  {"line_number": 6, "modified_line": "        return low\n"}]}])}),
            response("Done.", "goal_accomplished", {}),
        ],
        "fixed": {"rangekit/bounds.py": (
            'def clamp(value, low, high):\n'
            '    """Limit value to the closed interval [low, high]."""\n'
            '    if low > high:\n'
            '        raise ValueError("low must not exceed high")\n'
            '    if value < low:\n'
            '        return low\n'
            '    if value > high:\n'
            '        return high\n'
            '    return value\n'
            '\n\n'
            'def in_range(value, low, high):\n'
            '    return low <= value <= high\n')},
    },
    "multi_file": {
        "project": "shapes",
        "failing": ["tests.test_geometry.GeometryTest#test_perimeter",
                    "tests.test_geometry.GeometryTest#test_perimeter_cm",
                    "tests.test_geometry.GeometryTest#test_mm_to_cm"],
        "locations": [{"file": "shapes/geometry.py", "start_line": 5, "end_line": 5},
                      {"file": "shapes/units.py", "start_line": 5, "end_line": 5}],
        "steps": [
            response("Run the tests.", "run_tests", {}),
            response("Localize.", "run_fault_localization", {}),
            response("List what geometry.py defines.", "get_classes_and_methods",
                     {"file_path": "shapes/geometry.py"}),
            response("Both the perimeter and the unit conversion are wrong.", "express_hypothesis",
                     {"hypothesis": "perimeter forgets the factor 2 and mm_to_cm multiplies instead of dividing"}),
            response("Search for other conversions.", "search_code_base", {"key_words": ["mmToCm", "perimeter"]}),
            response("Fix both files.", "write_fix", {"changes": [
                {"file_path": "shapes/units.py", "insertions": [], "deletions": [],
                 "modifications": [{"line_number": 5, "modified_line": "    return mm / MM_PER_CM\n"}]},
                {"file_path": "shapes/geometry.py",
                 "insertions": [{"line_number": 5, "new_lines": ["    # both pairs of sides\n"]}],
                 "deletions": [],
                 "modifications": [{"line_number": 5, "modified_line": "    return 2 * (width + height)\n"}]}]}),
            response("All tests pass now.", "goal_accomplished", {"reason": "tests pass"}),
        ],
        "fixed": {
            "shapes/units.py": "MM_PER_CM = 10\n\n\ndef mm_to_cm(mm):\n    return mm / MM_PER_CM\n",
            "shapes/geometry.py": (
                "from shapes.units import mm_to_cm\n\n\n"
                "def rectangle_perimeter(width, height):\n"
                "    # both pairs of sides\n"
                "    return 2 * (width + height)\n\n\n"
                "def rectangle_perimeter_cm(width_mm, height_mm):\n"
                "    return mm_to_cm(rectangle_perimeter(width_mm, height_mm))\n"),
        },
    },
}


def write_jsonl(path: Path, rows) -> None:
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))


def config(project: str, failing, locations) -> dict:
    return {
        "project_root": project,
        "test_command": TEST_COMMAND,
        "test_framework": "unittest",
        "failing_tests": failing,
        "ground_truth_locations": locations,
        "cycle_budget": 40,
        "max_fix_variants": 30,
        "test_timeout": 60,
        "provider": {"price_per_million_tokens": 0.5185},
    }


def main() -> None:
    for name, case in CASES.items():
        d = PROJECTS / name
        (d / "config.json").write_text(json.dumps(config(case["project"], case["failing"], case["locations"]),
                                                  indent=1) + "\n")
        write_jsonl(d / "transcript.jsonl", [entry(t, i) for i, t in enumerate(case["steps"], 1)])
        (d / "expected.diff").write_text(golden(d / case["project"], case["fixed"]))

    # never fixes anything: 45 distinct reads of the single-line project
    reads = [entry(response(f"Keep reading ({i}).", "read_range",
                            {"file_path": "statlib/stats.py", "start_line": 1, "end_line": i}), i)
             for i in range(1, 46)]
    write_jsonl(PROJECTS / "never_fix.jsonl", reads)


if __name__ == "__main__":
    main()
