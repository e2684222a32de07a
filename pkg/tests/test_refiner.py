from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import levenshtein_oracle
from fixloop.fsm import AgentState, available_tools, get_tool, tool_names
from fixloop.models import ArgsClass, Command, NameClass, ParseClass
from fixloop.refiner import (
    canonical_args,
    detect_repetition,
    extract_json_object,
    levenshtein,
    map_arguments,
    map_tool_name,
    match_name,
    normalized_levenshtein,
    parse_response,
    refine,
    resolve_path,
)

FILES = ["source/org/jfree/data/time/Week.java", "source/org/jfree/data/time/Day.java",
         "tests/org/jfree/data/time/WeekTest.java", "lib/a/Util.java", "lib/b/Util.java"]

words = st.text(alphabet="abcde_", max_size=9)


@given(words, words)
@settings(max_examples=300)
def test_levenshtein_matches_textbook_definition(a, b):
    assert levenshtein(a, b) == levenshtein_oracle(a, b)


@given(words, words)
def test_normalized_distance_is_symmetric_and_bounded(a, b):
    d = normalized_levenshtein(a, b)
    assert d == normalized_levenshtein(b, a)
    assert 0.0 <= d <= 1.0
    assert (d == 0.0) == (a == b)


def test_fig3_reply_is_fully_parsable():
    raw = json.dumps({
        "thoughts": "I should look for similar code",
        "command": {"name": "search_code_base",
                    "args": {"key_words": ["TimeSeries", "createCopy", "getIndex"]}},
    })
    report = refine(raw, available_tools(AgentState.COLLECT))
    assert report.parse_class is ParseClass.FULLY_PARSABLE
    assert report.final_command.name == "search_code_base"
    assert len(report.final_command.args["key_words"]) == 3


def test_missing_thoughts_is_partially_parsable():
    response, cls = parse_response('{"command": {"name": "run_tests", "args": {}}}')
    assert cls is ParseClass.PARTIALLY_PARSABLE
    assert response.command == Command("run_tests", {})
    assert response.thoughts == ""


def test_prose_is_unparsable():
    report = refine("I will now read the file.", available_tools(AgentState.UNDERSTAND))
    assert report.parse_class is ParseClass.UNPARSABLE
    assert report.final_command is None
    assert report.outcome_labels == []


def test_longest_object_wins():
    raw = 'Example: {"a": 1}. Real reply: {"thoughts": "x", "command": {"name": "run_tests", "args": {}}}'
    assert extract_json_object(raw)["thoughts"] == "x"


def test_braces_inside_strings_do_not_confuse_extraction():
    obj = {"thoughts": "a } brace { and \"quotes\"", "command": {"name": "run_tests", "args": {}}}
    assert extract_json_object("noise " + json.dumps(obj) + " trailing }") == obj


@pytest.mark.parametrize("predicted, expected, cls", [
    ("search_code_base", "search_code_base", NameClass.CORRECT),
    ("serch_code_base", "search_code_base", NameClass.MAPPED),
    ("Search_Code_Base", "search_code_base", NameClass.MAPPED),
    ("write_fixes", "write_fix", NameClass.MAPPED),
    ("frobnicate", None, NameClass.NONEXISTENT),
])
def test_map_tool_name(predicted, expected, cls):
    assert map_tool_name(predicted, tool_names()) == (expected, cls)


def test_ambiguous_substring_is_nonexistent():
    m = match_name("run", tool_names())
    assert m.name is None and m.name_class is NameClass.NONEXISTENT
    assert "ambiguous" in m.diagnostic


def test_levenshtein_tie_is_ambiguous():
    m = match_name("abcx", ["abcd", "abce"], threshold=0.5)
    assert m.name is None and "ambiguous" in m.diagnostic


def test_threshold_is_strict():
    # 1 edit over 10 characters is exactly 0.1
    assert match_name("readrange", ["read_range"]).name is None
    assert match_name("readrange", ["read_range"], threshold=0.11).name == "read_range"


@given(st.text(alphabet="abcdefgh_", min_size=1, max_size=12),
       st.floats(min_value=0.0, max_value=1.0), st.floats(min_value=0.0, max_value=1.0))
def test_raising_threshold_never_unmaps_a_name(predicted, t1, t2):
    lo, hi = sorted((t1, t2))
    names = tool_names()
    a = match_name(predicted, names, lo)
    if a.name is not None:
        assert match_name(predicted, names, hi).name == a.name


def test_path_maps_to_file_path():
    args, cls, problems = map_arguments({"path": "x", "start_line": 1, "end_line": 2}, get_tool("read_range"))
    assert cls is ArgsClass.REFINED and not problems
    assert args == {"file_path": "x", "start_line": 1, "end_line": 2}


def test_missing_required_argument_is_unrefinable():
    args, cls, problems = map_arguments({"file_path": "x"}, get_tool("read_range"))
    assert args is None and cls is ArgsClass.UNREFINABLE
    assert any("start_line" in p for p in problems)


def test_optional_argument_may_be_omitted():
    args, cls, _ = map_arguments({"code_snippet": "f(x)"}, get_tool("find_similar_api_calls"))
    assert cls is ArgsClass.CORRECT and args == {"code_snippet": "f(x)"}


@pytest.mark.parametrize("predicted, expected", [
    ("source/org/jfree/data/time/Week.java", "source/org/jfree/data/time/Week.java"),
    ("Week.java", "source/org/jfree/data/time/Week.java"),
    ("./org/jfree/data/time/Day.java", "source/org/jfree/data/time/Day.java"),
    ("wrong/prefix/time/Day.java", "source/org/jfree/data/time/Day.java"),
    ("org.jfree.data.time.WeekTest", "tests/org/jfree/data/time/WeekTest.java"),
    ("Util.java", None),
    ("Missing.java", None),
])
def test_resolve_path(predicted, expected):
    assert resolve_path(predicted, FILES) == expected


def test_unavailable_tool_is_reported_with_its_name():
    raw = json.dumps({"thoughts": "", "command": {"name": "write_fix", "args": {"changes": []}}})
    report = refine(raw, available_tools(AgentState.UNDERSTAND))
    assert report.name_class is NameClass.NONEXISTENT
    assert report.predicted_name == "write_fix"


def test_value_repair_counts_as_refined():
    raw = json.dumps({"thoughts": "", "command": {"name": "read_range",
                                                  "args": {"file_path": "Week.java", "start_line": "3",
                                                           "end_line": 9.0}}})
    report = refine(raw, available_tools(AgentState.UNDERSTAND), FILES)
    assert report.args_class is ArgsClass.REFINED
    assert report.final_command.args == {"file_path": FILES[0], "start_line": 3, "end_line": 9}


def test_repetition_uses_structural_equality():
    a = Command("read_range", {"file_path": "A", "start_line": 1, "end_line": 5})
    b = Command("read_range", {"end_line": 5, "start_line": 1, "file_path": "A"})
    c = Command("read_range", {"file_path": "A", "start_line": 1, "end_line": 6})
    assert detect_repetition(b, [a])
    assert not detect_repetition(c, [a])
    assert not detect_repetition(a, [])


def test_patch_argument_repetition_ignores_edit_order():
    mods = [{"line_number": 1, "modified_line": "x\n"}, {"line_number": 2, "modified_line": "y\n"}]
    p1 = [{"file_path": "A", "insertions": [], "deletions": [], "modifications": mods}]
    p2 = [{"file_path": "A", "modifications": list(reversed(mods))}]
    assert canonical_args(Command("write_fix", {"changes": p1})) == canonical_args(Command("write_fix", {"changes": p2}))
