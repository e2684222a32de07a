from __future__ import annotations

from hypothesis import given
from hypothesis import strategies as st

from conftest import PROJECTS
from fixloop.config import load_config
from fixloop.fsm import AgentState, available_tools
from fixloop.models import Command
from fixloop.prompt import (
    SECTION_ORDER,
    STATIC_SECTIONS,
    GatheredInformation,
    initialize_prompt,
    render,
    update_after_cycle,
)
from fixloop.templates import section_headers
from fixloop.tokens import count_tokens


def _task():
    task, _ = load_config(PROJECTS / "single_line" / "config.json")
    return task


def test_sections_in_order_with_headers():
    prompt = initialize_prompt(_task())
    assert [s.id for s in prompt.sections] == list(SECTION_ORDER)
    text = render(prompt)
    headers = section_headers()
    positions = [text.index(headers[s]) for s in SECTION_ORDER]
    assert positions == sorted(positions)


def test_role_names_the_project_and_failing_tests():
    text = render(initialize_prompt(_task()))
    assert "statlib" in text and "tests.test_stats.StatsTest#test_mean" in text
    assert "Python" in text


def test_update_changes_only_dynamic_sections():
    prompt = initialize_prompt(_task())
    digest = prompt.static_digest()
    before = {s.id: s.content for s in prompt.sections}
    cmd = Command("express_hypothesis", {"hypothesis": "off by one"})
    update_after_cycle(prompt, AgentState.COLLECT, available_tools(AgentState.COLLECT), cmd, "recorded",
                       cycle_index=1, cycles_used=1, cycle_budget=40)
    assert prompt.static_digest() == digest
    changed = {s.id for s in prompt.sections if s.content != before[s.id]}
    assert changed and not changed & STATIC_SECTIONS
    assert "search_code_base" in prompt.section("available_tools").content
    last = prompt.section("last_command_result").content
    assert "express_hypothesis" in last and "cycles left: 39" in last


def test_refusals_are_not_gathered():
    prompt = initialize_prompt(_task())
    update_after_cycle(prompt, AgentState.UNDERSTAND, available_tools(AgentState.UNDERSTAND), None,
                       "format reminder", cycle_index=1, cycles_used=1, cycle_budget=40)
    assert prompt.gathered.entries == []
    assert "format reminder" in prompt.section("last_command_result").content


def test_gathered_information_groups_by_tool():
    g = GatheredInformation()
    g.add("read_range", 1, "read_range {...}", "lines 1-3")
    g.add("run_tests", 2, "run_tests {}", "1 failing")
    g.add("read_range", 3, "read_range {...}", "lines 4-6")
    assert list(g.subsections()) == ["read_range", "run_tests"]
    text = g.render()
    assert text.index("lines 4-6") < text.index("### run_tests")


def test_gathered_information_evicts_oldest_first():
    g = GatheredInformation(token_cap=200)
    for k in range(30):
        g.add("read_range", k, f"cmd{k}", "word " * 20)
    assert g.token_count() <= 200
    assert g.evicted > 0
    assert g.entries[-1].cycle == 29
    assert "elided" in g.render()


def test_single_oversized_entry_is_truncated():
    g = GatheredInformation(token_cap=100)
    g.add("extract_method", 1, "cmd", "tok " * 1000)
    assert g.token_count() <= 100
    assert "truncated" in g.entries[0].output


def test_gathered_round_trip():
    g = GatheredInformation(token_cap=500)
    g.add("run_tests", 1, "run_tests {}", "ok")
    again = GatheredInformation.from_dict(g.to_dict())
    assert again.render() == g.render()


def test_header_lookalikes_in_tool_output_are_escaped():
    prompt = initialize_prompt(_task())
    header = section_headers()["goals"]
    update_after_cycle(prompt, AgentState.UNDERSTAND, available_tools(AgentState.UNDERSTAND),
                       Command("run_tests", {}), f"before\n{header}\nafter", cycle_index=1,
                       cycles_used=1, cycle_budget=40)
    assert render(prompt).count(f"\n{header}\n") == 1


@given(st.text(alphabet="#ab \\\n", max_size=30), st.text(alphabet="#ab \\\n", max_size=30))
def test_rendering_is_injective_in_tool_output(a, b):
    task = _task()
    p1, p2 = initialize_prompt(task), initialize_prompt(task)
    headers = list(section_headers().values())
    a = a.replace("#", headers[1], 1)
    b = b.replace("#", headers[1], 1)
    for p, out in ((p1, a), (p2, b)):
        p.set("last_command_result", out)
    assert (render(p1) == render(p2)) == (a == b)


def test_budget_counter_never_negative():
    prompt = initialize_prompt(_task())
    update_after_cycle(prompt, AgentState.UNDERSTAND, [], None, "x", cycle_index=50, cycles_used=50,
                       cycle_budget=40)
    assert "cycles left: 0" in prompt.section("last_command_result").content


def test_first_prompt_size_is_moderate():
    assert count_tokens(render(initialize_prompt(_task()))) < 4000
