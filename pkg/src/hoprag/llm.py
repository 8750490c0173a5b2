"""Text-generation backends and the uniform ``generate`` entry point.

Two backends: an HTTP client for OpenAI-style ``/completions`` endpoints and
a scripted backend that replays canned responses for offline, deterministic
runs. ``generate`` applies stop-sequence truncation uniformly so callers
never see stop text regardless of backend behavior.
"""

from __future__ import annotations

import os
import time
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import requests

from ._http import post_json
from .errors import BackendError, ScriptExhaustedError
from .templating import Tokenizer, WhitespaceTokenizer


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    stop_sequences: tuple[str, ...] = ()
    max_new_tokens: int = 256
    temperature: float = 0.0

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class GenerationResult:
    text: str
    new_token_count: int
    prompt_token_count: int
    latency_s: float


@dataclass(frozen=True)
class RawCompletion:
    """What a backend returns before stop handling: text plus optional usage counts."""

    text: str
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


class ScriptedBackend:
    """Replays canned responses strictly in order; exhaustion is an error.

    Single-run-exclusive by design: sharing one script across concurrent runs
    would interleave responses.
    """

    def __init__(self, responses: Sequence[str], tokenizer: Tokenizer | None = None):
        self._queue = deque(responses)
        self.tokenizer: Tokenizer = tokenizer or WhitespaceTokenizer()

    def __len__(self) -> int:
        return len(self._queue)

    def complete(self, request: GenerationRequest) -> RawCompletion:
        if not self._queue:
            raise ScriptExhaustedError("scripted backend has no responses left")
        return RawCompletion(text=self._queue.popleft())


class HttpCompletionsBackend:
    """Client for an OpenAI-style completions endpoint.

    POSTs ``{"model", "prompt", "max_tokens", "temperature", "stop"}`` to
    ``{base_url}/completions``. The API key comes from the environment
    variable named by ``api_key_env``; requests retry with backoff on
    transport errors and 5xx responses. Shareable across concurrent runs.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        api_key_env: str = "HOPRAG_API_KEY",
        timeout: float = 60.0,
        retries: int = 2,
        backoff: float = 0.5,
        session=None,
        tokenizer: Tokenizer | None = None,
    ):
        self._base_url = base_url.rstrip("/")
        self._model = model
        self._api_key_env = api_key_env
        self._timeout = timeout
        self._retries = retries
        self._backoff = backoff
        self._session = session if session is not None else requests.Session()
        self.tokenizer: Tokenizer = tokenizer or WhitespaceTokenizer()

    def complete(self, request: GenerationRequest) -> RawCompletion:
        payload: dict = {
            "model": self._model,
            "prompt": request.prompt,
            "max_tokens": request.max_new_tokens,
            "temperature": request.temperature,
        }
        if request.stop_sequences:
            payload["stop"] = list(request.stop_sequences)
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self._api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        data = post_json(
            self._session,
            f"{self._base_url}/completions",
            payload,
            headers=headers,
            timeout=self._timeout,
            retries=self._retries,
            backoff=self._backoff,
        )
        try:
            text = data["choices"][0].get("text", "")
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completions response: {data!r:.200}") from exc
        usage = data.get("usage") or {}
        return RawCompletion(
            text=text,
            prompt_tokens=usage.get("prompt_tokens"),
            completion_tokens=usage.get("completion_tokens"),
        )


def truncate_at_stop(text: str, stop_sequences: Sequence[str]) -> str:
    """Cut `text` at the first occurrence of any stop sequence, excluding it."""
    cut = len(text)
    for stop in stop_sequences:
        if not stop:
            continue
        idx = text.find(stop)
        if idx != -1:
            cut = min(cut, idx)
    return text[:cut]


def generate(backend, request: GenerationRequest) -> GenerationResult:
    """Run one generation through `backend` with uniform stop handling.

    Token counts come from backend-reported usage when available and still
    valid (no client-side truncation happened); otherwise from the backend's
    tokenizer. Latency covers the backend call only.
    """
    if not request.prompt:
        raise ValueError("prompt must be non-empty")
    start = time.perf_counter()
    raw = backend.complete(request)
    latency = time.perf_counter() - start
    text = truncate_at_stop(raw.text, request.stop_sequences)
    tokenizer: Tokenizer = getattr(backend, "tokenizer", None) or WhitespaceTokenizer()
    if raw.completion_tokens is not None and text == raw.text:
        new_tokens = raw.completion_tokens
    else:
        new_tokens = tokenizer.count(text)
    if raw.prompt_tokens is not None:
        prompt_tokens = raw.prompt_tokens
    else:
        prompt_tokens = tokenizer.count(request.prompt)
    return GenerationResult(
        text=text,
        new_token_count=new_tokens,
        prompt_token_count=prompt_tokens,
        latency_s=latency,
    )
