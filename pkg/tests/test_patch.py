from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import apply_edit_oracle
from fixloop.patch import FileEdit, Insertion, Modification, Patch, PatchError, apply_to_lines, apply_to_text


@st.composite
def file_and_edit(draw):
    n = draw(st.integers(min_value=0, max_value=15))
    lines = [f"L{k}\n" for k in range(1, n + 1)]
    touched = draw(st.lists(st.integers(1, n), unique=True)) if n else []
    split = draw(st.integers(0, len(touched)))
    deletions = touched[:split]
    mods = {k: f"M{k}\n" for k in touched[split:]}
    ins_at = draw(st.lists(st.integers(1, n + 1), unique=True, max_size=4))
    ins = {k: [f"I{k}.{j}\n" for j in range(draw(st.integers(1, 3)))] for k in ins_at}
    edit = FileEdit("f.txt", [Insertion(k, tuple(v)) for k, v in ins.items()], deletions,
                    [Modification(k, v) for k, v in mods.items()])
    return lines, edit, ins, set(deletions), mods


@given(file_and_edit())
@settings(max_examples=300)
def test_apply_matches_bottom_up_oracle(case):
    lines, edit, ins, dels, mods = case
    assert apply_to_lines(lines, edit) == apply_edit_oracle(lines, ins, dels, mods)


@given(file_and_edit(), st.randoms())
def test_edit_order_does_not_matter(case, rnd):
    lines, edit, *_ = case
    shuffled = FileEdit(edit.file_path, list(edit.insertions), list(edit.deletions), list(edit.modifications))
    rnd.shuffle(shuffled.insertions)
    rnd.shuffle(shuffled.deletions)
    rnd.shuffle(shuffled.modifications)
    assert apply_to_lines(lines, shuffled) == apply_to_lines(lines, edit)
    assert Patch([shuffled]) == Patch([edit])


@given(file_and_edit())
def test_json_round_trip(case):
    _, edit, *_ = case
    patch = Patch([edit])
    assert Patch.from_json_obj(json.dumps(patch.to_json_obj())) == patch


def test_both_deleted_and_modified_is_a_conflict():
    patch = Patch.from_json_obj({"file_path": "A", "deletions": [3],
                                 "modifications": [{"line_number": 3, "modified_line": "x\n"}]})
    assert patch.conflicts() == ["A: line 3 is both deleted and modified"]
    with pytest.raises(PatchError):
        apply_to_lines(["a\n"] * 5, patch.files[0])


def test_double_modification_and_double_insertion_are_conflicts():
    patch = Patch.from_json_obj({"file_path": "A",
                                 "insertions": [{"line_number": 1, "new_lines": ["a\n"]},
                                                {"line_number": 1, "new_lines": ["b\n"]}],
                                 "modifications": [{"line_number": 2, "modified_line": "x\n"},
                                                   {"line_number": 2, "modified_line": "y\n"}]})
    assert len(patch.conflicts()) == 2


def test_out_of_range_lines_are_rejected():
    edit = FileEdit("A", deletions=[4])
    with pytest.raises(PatchError, match="out of range"):
        apply_to_lines(["a\n", "b\n", "c\n"], edit)
    edit = FileEdit("A", insertions=[Insertion(5, ("x\n",))])
    with pytest.raises(PatchError, match="out of range"):
        apply_to_lines(["a\n", "b\n", "c\n"], edit)


def test_append_after_last_line():
    assert apply_to_text("a\nb\n", FileEdit("A", insertions=[Insertion(3, ("c\n",))])) == "a\nb\nc\n"


def test_missing_newlines_are_added():
    edit = FileEdit("A", insertions=[Insertion(1, ("new",))], modifications=[Modification(1, "first")])
    assert apply_to_text("a\nb\n", edit) == "new\nfirst\nb\n"


def test_crlf_files_keep_their_line_endings():
    edit = FileEdit("A", insertions=[Insertion(2, ("mid",))])
    assert apply_to_text("a\r\nb\r\n", edit) == "a\r\nmid\r\nb\r\n"


def test_unterminated_last_line():
    assert apply_to_text("a\nb", FileEdit("A", modifications=[Modification(2, "B\n")])) == "a\nB"
    assert apply_to_text("a\nb", FileEdit("A", insertions=[Insertion(3, ("c",))])) == "a\nb\nc\n"


def test_entries_for_the_same_file_are_merged():
    patch = Patch.from_json_obj([{"file_path": "A", "deletions": [1]}, {"file_path": "A", "deletions": [2]}])
    assert len(patch.files) == 1 and sorted(patch.files[0].deletions) == [1, 2]


@pytest.mark.parametrize("bad", [
    "not json",
    42,
    [{"insertions": []}],
    [{"file_path": "A", "modifications": [{"line_number": 1}]}],
    [{"file_path": "A", "deletions": ["three"]}],
    [{"file_path": "A", "insertions": [{"line_number": 1, "new_lines": [1, 2]}]}],
])
def test_malformed_patches_raise(bad):
    with pytest.raises(PatchError):
        Patch.from_json_obj(bad)


def test_numeric_strings_are_accepted_as_line_numbers():
    patch = Patch.from_json_obj({"file_path": "A", "deletions": ["2"]})
    assert patch.files[0].deletions == [2]


def test_empty_patch():
    assert Patch.from_json_obj([{"file_path": "A", "insertions": [], "deletions": [], "modifications": []}]).is_empty()
