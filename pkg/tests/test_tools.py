from __future__ import annotations

import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import FIXTURES
from oracles import random_java_corpus, search_oracle, subtokens_oracle
from fixloop import tools
from fixloop.codeindex import CodeIndex, parse_java
from fixloop.provider import ScriptedProvider
from fixloop.tokens import count_tokens

JAVA_ROOT = FIXTURES / "java_project"
WEEK = "source/org/jfree/data/time/Week.java"
DAY = "source/org/jfree/data/time/Day.java"


@pytest.fixture(scope="module")
def index():
    return CodeIndex(JAVA_ROOT)


@pytest.mark.parametrize("word, expected", [
    ("quickSortArray", ["quick", "sort", "array"]),
    ("HTTPServer", ["http", "server"]),
    ("parse_json_v2", ["parse", "json", "v", "2"]),
    ("org.jfree.Week", ["org", "jfree", "week"]),
    ("getID", ["get", "id"]),
    ("", []),
])
def test_split_subtokens(word, expected):
    assert tools.split_subtokens(word) == expected


@given(st.text(alphabet="aZbY09_.-$ ", max_size=20))
def test_split_subtokens_matches_oracle(word):
    assert tools.split_subtokens(word) == subtokens_oracle(word)


def test_read_range_numbers_lines():
    text = "a\nb\nc\n"
    assert tools.read_range(text, 2, 3) == "2: b\n3: c"
    assert tools.read_range(text, 2, 99) == "2: b\n3: c"
    assert "empty" in tools.read_range(text, 9, 12)
    with pytest.raises(tools.ToolInputError):
        tools.read_range(text, 3, 2)
    with pytest.raises(tools.ToolInputError):
        tools.read_range(text, 0, 2)


def test_extract_method_returns_all_overloads(index):
    fi = index.get(DAY)
    found = tools.extract_method(fi, index.read(DAY), "getDay")
    assert len(found) == 2
    rendered = tools.render_extracted(found, fi, "getDay")
    assert rendered.count("getDay(") == 2


def test_extract_method_miss_lists_methods(index):
    fi = index.get(WEEK)
    out = tools.render_extracted([], fi, "nope")
    assert "compute" in out and "toString" in out


def test_classes_and_methods_rendering(index):
    out = tools.render_classes_and_methods(index.get(WEEK))
    assert '"Week"' in out and '"compute"' in out


def test_extract_tests_finds_java_test_source(index):
    tests = tools.extract_tests("", index, ["org.jfree.data.time.WeekTest#testCompute", "Missing#test"])
    assert tests[0].file == "tests/org/jfree/data/time/WeekTest.java"
    assert "w.compute(2)" in tests[0].source
    assert tests[1].source is None
    assert "source not found" in tools.render_extracted_tests(tests)


def test_unidentifiable_report():
    assert tools.report_is_unidentifiable("Segmentation fault, error in runner", [])
    assert not tools.report_is_unidentifiable("Ran 3 tests\n\nOK", [])
    assert not tools.report_is_unidentifiable("FAILED", ["A#b"])


def test_quick_sort_search():
    hits = tools.search_code_base(CodeIndex(FIXTURES / "search_project"), ["quickSortArray"])
    methods = hits["src/util/Sorting.java"]["Sorting"]
    assert list(methods) == ["arrayQuickSort", "sortArray", "quickSort"]
    assert methods["arrayQuickSort"] == ["quick", "sort", "array"]


def test_search_requires_keywords(index):
    with pytest.raises(tools.ToolInputError):
        tools.search_code_base(index, [])
    with pytest.raises(tools.ToolInputError):
        tools.search_code_base(index, ["  "])


def test_search_cap(tmp_path):
    rng = random.Random(3)
    methods = random_java_corpus(rng, tmp_path, 200)
    hits = tools.search_code_base(CodeIndex(tmp_path), ["return"], cap=50)
    assert sum(len(ms) for classes in hits.values() for ms in classes.values()) == min(50, len(methods))
    rows = search_oracle(methods, ["return"], cap=7)
    assert len(rows) == min(7, len(methods))


def test_similar_api_calls(index):
    callee, sites = tools.find_similar_api_calls(index, "result = w.compute(2);")
    assert callee == "compute"
    assert [(s.file, s.line) for s in sites] == [("tests/org/jfree/data/time/WeekTest.java", 14)]
    assert "w.compute(2)" in sites[0].text


def test_similar_api_calls_skip_declarations(index):
    callee, sites = tools.find_similar_api_calls(index, "add(x)", DAY)
    assert callee == "add"
    assert {s.line for s in sites} == {23, 25}


def test_similar_api_calls_need_a_call(index):
    with pytest.raises(tools.ToolInputError):
        tools.find_similar_api_calls(index, "int x = 3;")


def test_generation_context_keeps_the_tail():
    text = "\n".join(f"int v{k} = {k};" for k in range(5000)) + "\npublic int f() {\n"
    ctx = tools.generation_context(text, 5001)
    assert count_tokens(ctx) <= tools.GENERATION_CONTEXT_TOKENS
    assert ctx.endswith("public int f() {")


def test_generate_method_body_truncates_output(index):
    fi = index.get(WEEK)
    huge = " ".join(["x"] * (tools.GENERATION_OUTPUT_TOKENS + 500))
    provider = ScriptedProvider([huge])
    body, request = tools.generate_method_body(provider, fi, index.read(WEEK), "public int compute(int offset)")
    assert "truncated" in body
    assert request.purpose == "method_body"
    assert request.max_output_tokens == tools.GENERATION_OUTPUT_TOKENS
    assert "public int compute(int offset) {" in request.prompt_text
    assert "toString" not in request.prompt_text


def test_locate_signature_missing(index):
    fi = index.get(WEEK)
    with pytest.raises(tools.ToolInputError):
        tools.locate_signature(fi, index.read(WEEK), "void nowhere(int a)")


def test_locate_signature_picks_matching_overload():
    src = "class A {\n  int g() { return 0; }\n  int g(int x) { return x; }\n}\n"
    fi = parse_java(src)
    assert tools.locate_signature(fi, src, "int g(int x)") == 3
