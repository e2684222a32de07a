"""Approximate tokenizer used when the provider reports no usage.

A token is a run of word characters or a single punctuation character.
This overcounts relative to BPE tokenizers on prose and undercounts on long
identifiers; it is only used for budgeting and offline accounting.
"""

from __future__ import annotations

import re

_TOKEN = re.compile(r"\w+|[^\w\s]")


def count_tokens(text: str) -> int:
    return sum(1 for _ in _TOKEN.finditer(text))


def keep_last_tokens(text: str, limit: int) -> str:
    """Suffix of ``text`` holding at most ``limit`` tokens."""
    if limit <= 0:
        return ""
    starts = [m.start() for m in _TOKEN.finditer(text)]
    if len(starts) <= limit:
        return text
    return text[starts[-limit]:]


def keep_first_tokens(text: str, limit: int) -> str:
    """Prefix of ``text`` holding at most ``limit`` tokens."""
    if limit <= 0:
        return ""
    ends = [m.end() for m in _TOKEN.finditer(text)]
    if len(ends) <= limit:
        return text
    return text[:ends[limit - 1]]
