"""Dense retrieval: embedding clients, corpus ingestion, an exact cosine index, persistence.

The index is a deliberate brute-force design: every passage embedding is
L2-normalized at ingestion, cosine similarity reduces to a dot product, and
top-k search scans the whole matrix. At desk scale this is fast, and
exactness means search results can be checked against an independent
full-scan oracle. Ties on score break by ascending passage id so results
are deterministic across platforms.

Two embedding clients ship: an HTTP client for OpenAI-style ``/embeddings``
endpoints and a seeded hash-based client that lets everything downstream run
offline and deterministically.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import requests

from ._http import post_json
from .errors import IndexFormatError, JsonlFormatError


@dataclass(frozen=True)
class Passage:
    """One retrievable corpus unit."""

    id: str
    title: str
    text: str


@dataclass(frozen=True)
class RetrievalHit:
    passage_id: str
    score: float
    rank: int


class EmbeddingClient:
    """Interface for embedding backends.

    Implementations must be deterministic within one instance (the same text
    always maps to the same vector) and safely shareable across concurrent
    question runs. ``embed`` returns raw (not necessarily normalized) vectors
    of shape (len(texts), dim).
    """

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def identifier(self) -> str:
        raise NotImplementedError

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        raise NotImplementedError


class HashEmbeddingClient(EmbeddingClient):
    """Deterministic offline client: a seeded hash of the text drives a pseudo-random vector.

    Exists so the whole pipeline (index build, search, termination scoring)
    runs without a network or model weights. Vectors are reproducible across
    runs for a fixed (dim, seed).
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be positive")
        self._dim = dim
        self._seed = seed

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def identifier(self) -> str:
        return f"hash:d{self._dim}:s{self._seed}"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), self._dim), dtype=np.float64)
        for i, text in enumerate(texts):
            digest = hashlib.sha256(f"{self._seed}|{text}".encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            out[i] = rng.standard_normal(self._dim)
        return out


class HttpEmbeddingClient(EmbeddingClient):
    """Client for an OpenAI-style embeddings endpoint.

    POSTs ``{"model": ..., "input": [texts]}`` to ``{base_url}/embeddings``.
    The API key is read from the environment variable named by
    ``api_key_env``; when unset, no Authorization header is sent (local
    servers). A session object may be injected for testing.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        dim: int,
        *,
        api_key_env: str = "HOPRAG_API_KEY",
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 0.5,
        session=None,
    ):
        if dim < 1:
            raise ValueError("dim must be positive")
        self._base_url = base_url.rstrip("/")
        self._model = model
        self._dim = dim
        self._api_key_env = api_key_env
        self._timeout = timeout
        self._retries = retries
        self._backoff = backoff
        self._session = session if session is not None else requests.Session()

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def identifier(self) -> str:
        return f"http:{self._model}:d{self._dim}"

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self._api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        data = post_json(
            self._session,
            f"{self._base_url}/embeddings",
            {"model": self._model, "input": list(texts)},
            headers=self._headers(),
            timeout=self._timeout,
            retries=self._retries,
            backoff=self._backoff,
        )
        rows = data.get("data")
        if not isinstance(rows, list) or len(rows) != len(texts):
            raise ValueError(
                f"embedding backend returned {0 if not isinstance(rows, list) else len(rows)} "
                f"vectors for {len(texts)} inputs"
            )
        return np.asarray([row["embedding"] for row in rows], dtype=np.float64)


def normalize(vector: np.ndarray) -> np.ndarray:
    """Scale `vector` to unit L2 norm (direction preserved), in double precision."""
    v = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / norm


def embed_batch(client: EmbeddingClient, texts: Sequence[str]) -> np.ndarray:
    """Embed `texts` through `client` and L2-normalize every row.

    Returns an array of shape (len(texts), client.dim). Raises ValueError on
    empty input, empty texts, wrong backend shape, or non-finite values;
    backend transport failures propagate as BackendError.
    """
    texts = list(texts)
    if not texts:
        raise ValueError("texts must be non-empty")
    if any(not t for t in texts):
        raise ValueError("texts must not contain empty strings")
    raw = np.asarray(client.embed(texts), dtype=np.float64)
    expected = (len(texts), client.dim)
    if raw.shape != expected:
        raise ValueError(f"embedding backend returned shape {raw.shape}, expected {expected}")
    if not np.all(np.isfinite(raw)):
        raise ValueError("embedding backend returned non-finite values")
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("embedding backend returned a zero vector")
    return raw / norms


def passage_embedding_text(passage: Passage, include_title: bool = True) -> str:
    """The text actually embedded for a passage: "title\\ntext" by default."""
    if include_title and passage.title:
        return f"{passage.title}\n{passage.text}"
    return passage.text


class VectorIndex:
    """Immutable exact-search cosine index over normalized passage embeddings."""

    def __init__(self, passages: Sequence[Passage], matrix: np.ndarray, client_identifier: str):
        self._passages = list(passages)
        self._matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if self._matrix.ndim != 2 or self._matrix.shape[0] != len(self._passages):
            raise ValueError("matrix shape does not match passage count")
        self._by_id = {p.id: p for p in self._passages}
        if len(self._by_id) != len(self._passages):
            raise ValueError("duplicate passage ids")
        self._client_identifier = client_identifier

    @property
    def size(self) -> int:
        return len(self._passages)

    @property
    def dim(self) -> int:
        return int(self._matrix.shape[1])

    @property
    def client_identifier(self) -> str:
        return self._client_identifier

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def passage(self, passage_id: str) -> Passage:
        return self._by_id[passage_id]

    def passages(self) -> list[Passage]:
        return list(self._passages)


def build_index(
    passages: Sequence[Passage], client: EmbeddingClient, *, include_title: bool = True
) -> VectorIndex:
    """Embed and index `passages`.

    Passage ids must be non-empty and unique, texts non-empty. Embeddings are
    normalized here, once; search then scores by plain dot product.
    """
    passages = list(passages)
    if not passages:
        raise ValueError("passages must be non-empty")
    seen: set[str] = set()
    for p in passages:
        if not p.id:
            raise ValueError("passage with empty id")
        if p.id in seen:
            raise ValueError(f"duplicate passage id: {p.id!r}")
        seen.add(p.id)
        if not p.text:
            raise ValueError(f"passage {p.id!r} has empty text")
    texts = [passage_embedding_text(p, include_title) for p in passages]
    matrix = embed_batch(client, texts)
    return VectorIndex(passages, matrix, client.identifier)


def search(index: VectorIndex, query: np.ndarray, k: int) -> list[RetrievalHit]:
    """Exact top-k cosine search.

    The query is normalized first, so scores are invariant under positive
    rescaling of the input vector. Returns min(k, corpus size) hits sorted by
    score descending, ties broken by ascending passage id, ranks from 1.
    """
    if k < 1:
        raise ValueError("k must be positive")
    q = normalize(np.asarray(query, dtype=np.float64))
    if q.shape != (index.dim,):
        raise ValueError(f"query dim {q.shape} does not match index dim {index.dim}")
    scores = index.matrix @ q
    passages = index.passages()
    order = sorted(range(index.size), key=lambda i: (-scores[i], passages[i].id))
    top = order[: min(k, index.size)]
    return [
        RetrievalHit(passage_id=passages[i].id, score=float(scores[i]), rank=rank)
        for rank, i in enumerate(top, 1)
    ]


_MAGIC = b"HRIX"
_VERSION = 1
_HEADER_FMT = "<HIIH"  # version, dim, count, client-id length


def save_index(index: VectorIndex, path: "str | Path") -> None:
    """Persist `index` as a binary file.

    Layout: magic, version, dim, count, embedding-client identifier, sha256
    checksum of the payload, then the passage table (length-prefixed id,
    title, text per passage) and the packed float64 vectors. The checksum
    and client identifier let load_index reject corrupt or mismatched files.
    """
    payload = io.BytesIO()
    for p in index.passages():
        for value in (p.id, p.title, p.text):
            raw = value.encode("utf-8")
            payload.write(struct.pack("<I", len(raw)))
            payload.write(raw)
    payload.write(index.matrix.astype("<f8", copy=False).tobytes(order="C"))
    body = payload.getvalue()
    digest = hashlib.sha256(body).digest()
    client_id = index.client_identifier.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack(_HEADER_FMT, _VERSION, index.dim, index.size, len(client_id)))
        fh.write(client_id)
        fh.write(digest)
        fh.write(body)


def load_index(path: "str | Path") -> VectorIndex:
    """Load an index persisted by save_index; search results round-trip bit-identically."""
    data = Path(path).read_bytes()
    header_len = len(_MAGIC) + struct.calcsize(_HEADER_FMT)
    if len(data) < header_len:
        raise IndexFormatError(f"{path}: truncated header")
    if data[: len(_MAGIC)] != _MAGIC:
        raise IndexFormatError(f"{path}: not an index file (bad magic)")
    version, dim, count, cid_len = struct.unpack_from(_HEADER_FMT, data, len(_MAGIC))
    if version != _VERSION:
        raise IndexFormatError(f"{path}: unsupported index version {version}")
    offset = header_len
    if len(data) < offset + cid_len + 32:
        raise IndexFormatError(f"{path}: truncated file")
    client_identifier = data[offset : offset + cid_len].decode("utf-8")
    offset += cid_len
    digest = data[offset : offset + 32]
    offset += 32
    body = data[offset:]
    if hashlib.sha256(body).digest() != digest:
        raise IndexFormatError(f"{path}: checksum mismatch (file is corrupt)")

    pos = 0

    def read_str() -> str:
        nonlocal pos
        if pos + 4 > len(body):
            raise IndexFormatError(f"{path}: truncated passage table")
        (length,) = struct.unpack_from("<I", body, pos)
        pos += 4
        if pos + length > len(body):
            raise IndexFormatError(f"{path}: truncated passage table")
        value = body[pos : pos + length].decode("utf-8")
        pos += length
        return value

    passages = []
    for _ in range(count):
        passages.append(Passage(id=read_str(), title=read_str(), text=read_str()))
    expected_bytes = count * dim * 8
    if len(body) - pos != expected_bytes:
        raise IndexFormatError(f"{path}: vector block has wrong size")
    matrix = np.frombuffer(body, dtype="<f8", count=count * dim, offset=pos).reshape(count, dim)
    return VectorIndex(passages, matrix.copy(), client_identifier)


def load_corpus(path: "str | Path") -> list[Passage]:
    """Load a JSONL corpus: one object per line with `id`, `title`, `contents`.

    Order-preserving; malformed lines raise JsonlFormatError naming the line.
    """
    passages: list[Passage] = []
    seen: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise JsonlFormatError(path, line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise JsonlFormatError(path, line_no, "expected a JSON object")
            missing = [k for k in ("id", "title", "contents") if k not in obj]
            if missing:
                raise JsonlFormatError(path, line_no, f"missing fields: {', '.join(missing)}")
            pid = str(obj["id"])
            contents = str(obj["contents"])
            if not pid:
                raise JsonlFormatError(path, line_no, "empty id")
            if not contents:
                raise JsonlFormatError(path, line_no, "empty contents")
            if pid in seen:
                raise JsonlFormatError(
                    path, line_no, f"duplicate id {pid!r} (first seen on line {seen[pid]})"
                )
            seen[pid] = line_no
            passages.append(Passage(id=pid, title=str(obj["title"]), text=contents))
    if not passages:
        raise JsonlFormatError(path, 0, "corpus is empty")
    return passages
