"""Shared exception types."""

from __future__ import annotations


class BackendError(RuntimeError):
    """An HTTP backend could not produce a usable response."""


class ScriptExhaustedError(RuntimeError):
    """A scripted backend ran out of canned responses."""


class IndexFormatError(ValueError):
    """A persisted index file is unreadable, corrupt, or incompatible."""


class JsonlFormatError(ValueError):
    """A JSONL file violated the expected schema; carries the offending line number."""

    def __init__(self, path: object, line_no: int, reason: str):
        super().__init__(f"{path}: line {line_no}: {reason}")
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason


class RunAborted(RuntimeError):
    """A question run failed mid-loop; carries the partial trace built so far."""

    def __init__(self, message: str, partial_trace: object = None):
        super().__init__(message)
        self.partial_trace = partial_trace
