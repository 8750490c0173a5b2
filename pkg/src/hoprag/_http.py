"""Minimal JSON-over-HTTP POST with retry and exponential backoff."""

from __future__ import annotations

import time
from typing import Any

import requests

from .errors import BackendError


def post_json(
    session: Any,
    url: str,
    payload: dict,
    *,
    headers: dict | None = None,
    timeout: float = 30.0,
    retries: int = 2,
    backoff: float = 0.5,
) -> dict:
    """POST `payload` as JSON and return the decoded response body.

    Retries on connection errors and 5xx responses; 4xx responses fail
    immediately (retrying a rejected request cannot help).
    """
    attempts = retries + 1
    last_error = "no attempt made"
    for attempt in range(attempts):
        try:
            resp = session.post(url, json=payload, headers=headers or {}, timeout=timeout)
        except requests.RequestException as exc:
            last_error = f"{type(exc).__name__}: {exc}"
        else:
            if resp.status_code == 200:
                try:
                    return resp.json()
                except ValueError as exc:
                    raise BackendError(f"{url}: response body is not JSON: {exc}") from exc
            if 400 <= resp.status_code < 500:
                raise BackendError(f"{url}: HTTP {resp.status_code}: {resp.text[:200]}")
            last_error = f"HTTP {resp.status_code}"
        if attempt + 1 < attempts and backoff > 0:
            time.sleep(backoff * (2**attempt))
    raise BackendError(f"{url}: giving up after {attempts} attempts ({last_error})")
