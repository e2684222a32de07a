"""Plain-text prompt templates shipped with the package."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files(__name__).joinpath(name).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def section_headers() -> dict[str, str]:
    headers = {}
    for line in load_template("headers.txt").splitlines():
        if line.strip() and not line.startswith("#"):
            key, _, title = line.partition("=")
            headers[key.strip()] = title.strip()
    return headers
