"""Language-model providers: live chat-completions client and scripted replay.

Every provider records each ``complete()`` call into a transcript and a
usage ledger. A transcript written by one session can drive a
ScriptedProvider to reproduce that session exactly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .tokens import count_tokens

log = logging.getLogger(__name__)

DEFAULT_PRICE_PER_MILLION = 0.5185


class ProviderError(Exception):
    """Non-retryable provider failure."""


class RetryableProviderError(ProviderError):
    """Transport-level failure; the same request may succeed later."""


class TranscriptExhausted(ProviderError):
    """A scripted provider ran out of recorded responses."""


@dataclass
class CompletionRequest:
    prompt_text: str
    max_output_tokens: int = 1024
    sampling_count: int = 1
    temperature: float | None = None
    purpose: str = "agent"

    def __post_init__(self) -> None:
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        if self.sampling_count < 1:
            raise ValueError("sampling_count must be >= 1")

    @property
    def request_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.purpose.encode())
        h.update(b"\0")
        h.update(self.prompt_text.encode("utf-8"))
        return h.hexdigest()[:16]


@dataclass
class Completion:
    texts: list[str]
    tokens_in: int
    tokens_out: int


@dataclass
class UsageLedger:
    price_per_million_tokens: float = DEFAULT_PRICE_PER_MILLION
    tokens_in: int = 0
    tokens_out: int = 0
    calls: int = 0

    def record(self, tokens_in: int, tokens_out: int) -> None:
        if tokens_in < 0 or tokens_out < 0:
            raise ValueError("token counts must be non-negative")
        self.tokens_in += tokens_in
        self.tokens_out += tokens_out
        self.calls += 1

    @property
    def total_tokens(self) -> int:
        return self.tokens_in + self.tokens_out


def estimate_cost(ledger: UsageLedger) -> float:
    """Currency cost of all tokens in the ledger at its per-million rate."""
    return ledger.total_tokens * ledger.price_per_million_tokens / 1_000_000


@dataclass
class TranscriptEntry:
    cycle: int
    purpose: str
    request_hash: str | None
    responses: list[str]
    tokens_in: int
    tokens_out: int

    @property
    def response_text(self) -> str:
        return self.responses[0] if self.responses else ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "cycle": self.cycle,
            "purpose": self.purpose,
            "request_hash": self.request_hash,
            "response_text": self.response_text,
            "responses": self.responses,
            "tokens_in": self.tokens_in,
            "tokens_out": self.tokens_out,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TranscriptEntry":
        if "responses" in data:
            responses = [str(r) for r in data["responses"]]
        elif "response_text" in data:
            responses = [str(data["response_text"])]
        else:
            raise ValueError("transcript entry needs 'response_text' or 'responses'")
        return cls(
            cycle=int(data.get("cycle", 0)),
            purpose=str(data.get("purpose", "agent")),
            request_hash=data.get("request_hash"),
            responses=responses,
            tokens_in=int(data["tokens_in"]) if data.get("tokens_in") is not None else -1,
            tokens_out=int(data["tokens_out"]) if data.get("tokens_out") is not None else -1,
        )


def load_transcript(path: Path) -> list[TranscriptEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                entries.append(TranscriptEntry.from_dict(json.loads(line)))
            except (json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: corrupt transcript entry ({exc})") from None
    return entries


def write_transcript(entries: Iterable[TranscriptEntry], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps(e.to_dict(), ensure_ascii=False) + "\n")


class LlmProvider:
    """Base class: subclasses implement ``_complete``; accounting happens here."""

    def __init__(self, price_per_million_tokens: float = DEFAULT_PRICE_PER_MILLION) -> None:
        self.ledger = UsageLedger(price_per_million_tokens)
        self.transcript: list[TranscriptEntry] = []
        self.current_cycle = 0

    def complete(self, request: CompletionRequest) -> list[str]:
        result = self._complete(request)
        self.ledger.record(result.tokens_in, result.tokens_out)
        self.transcript.append(TranscriptEntry(
            self.current_cycle, request.purpose, request.request_hash, list(result.texts),
            result.tokens_in, result.tokens_out))
        return result.texts

    def _complete(self, request: CompletionRequest) -> Completion:
        raise NotImplementedError


class ScriptedProvider(LlmProvider):
    """Replays responses in order.

    Entries carrying a ``request_hash`` are compared against the live request;
    mismatches are collected in ``divergences`` (cycle numbers) rather than
    raised, so a replay can run to completion and report where it drifted.
    """

    def __init__(self, entries: Iterable[TranscriptEntry | dict[str, Any] | str],
                 price_per_million_tokens: float = DEFAULT_PRICE_PER_MILLION,
                 check_hashes: bool = True) -> None:
        super().__init__(price_per_million_tokens)
        self.entries: list[TranscriptEntry] = []
        for e in entries:
            if isinstance(e, str):
                e = TranscriptEntry(0, "agent", None, [e], -1, -1)
            elif isinstance(e, dict):
                e = TranscriptEntry.from_dict(e)
            self.entries.append(e)
        self.cursor = 0
        self.check_hashes = check_hashes
        self.divergences: list[int] = []

    @classmethod
    def from_file(cls, path: Path, **kwargs: Any) -> "ScriptedProvider":
        return cls(load_transcript(Path(path)), **kwargs)

    @property
    def remaining(self) -> int:
        return len(self.entries) - self.cursor

    def _complete(self, request: CompletionRequest) -> Completion:
        if self.cursor >= len(self.entries):
            raise TranscriptExhausted(
                f"scripted transcript exhausted after {len(self.entries)} responses "
                f"(cycle {self.current_cycle}, purpose {request.purpose})")
        entry = self.entries[self.cursor]
        self.cursor += 1
        if self.check_hashes and entry.request_hash and entry.request_hash != request.request_hash:
            if self.current_cycle not in self.divergences:
                self.divergences.append(self.current_cycle)
        texts = list(entry.responses)
        tokens_in = entry.tokens_in if entry.tokens_in >= 0 else count_tokens(request.prompt_text)
        tokens_out = entry.tokens_out if entry.tokens_out >= 0 else sum(count_tokens(t) for t in texts)
        return Completion(texts, tokens_in, tokens_out)


@dataclass
class HttpProviderConfig:
    endpoint: str = "https://api.openai.com/v1"
    model: str = "gpt-3.5-turbo-0125"
    api_key_env: str = "FIXLOOP_API_KEY"
    timeout: float = 120.0
    temperature: float | None = None
    extra_headers: dict[str, str] = field(default_factory=dict)


class HttpProvider(LlmProvider):
    """Chat-completions style JSON API client.

    Request: POST {endpoint}/chat/completions with ``model``, a single user
    message holding the prompt, ``max_tokens``, ``n`` and optional
    ``temperature``. Response: ``choices[*].message.content`` and
    ``usage.prompt_tokens`` / ``usage.completion_tokens``.
    """

    def __init__(self, config: HttpProviderConfig,
                 price_per_million_tokens: float = DEFAULT_PRICE_PER_MILLION,
                 client: Any = None) -> None:
        super().__init__(price_per_million_tokens)
        import httpx

        self.config = config
        self._httpx = httpx
        self._client = client or httpx.Client(timeout=config.timeout)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json", **self.config.extra_headers}
        key = os.environ.get(self.config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _complete(self, request: CompletionRequest) -> Completion:
        body: dict[str, Any] = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "max_tokens": request.max_output_tokens,
            "n": request.sampling_count,
        }
        temperature = request.temperature if request.temperature is not None else self.config.temperature
        if temperature is not None:
            body["temperature"] = temperature
        url = self.config.endpoint.rstrip("/") + "/chat/completions"
        try:
            resp = self._client.post(url, json=body, headers=self._headers())
        except self._httpx.TransportError as exc:
            raise RetryableProviderError(f"transport error: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise RetryableProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
            texts = [c["message"]["content"] or "" for c in data["choices"]]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProviderError(f"malformed completion payload: {exc}") from exc
        usage = data.get("usage") or {}
        tokens_in = usage.get("prompt_tokens")
        tokens_out = usage.get("completion_tokens")
        if tokens_in is None:
            tokens_in = count_tokens(request.prompt_text)
        if tokens_out is None:
            tokens_out = sum(count_tokens(t) for t in texts)
        return Completion(texts, int(tokens_in), int(tokens_out))


def complete_with_retry(provider: LlmProvider, request: CompletionRequest,
                        attempts: int = 3, backoff: float = 1.0) -> list[str]:
    """Call ``provider`` retrying transport errors with exponential backoff."""
    for attempt in range(1, attempts + 1):
        try:
            return provider.complete(request)
        except RetryableProviderError as exc:
            if attempt == attempts:
                raise
            delay = backoff * 2 ** (attempt - 1)
            log.warning("provider attempt %d/%d failed (%s); retrying in %.1fs", attempt, attempts, exc, delay)
            if delay > 0:
                time.sleep(delay)
    raise AssertionError("unreachable")
