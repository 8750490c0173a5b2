"""Deterministic stop rule: halt when a new sub-query collapses into the question history.

The score of a candidate sub-query is its maximum cosine similarity against
the main question and all previously accepted sub-queries; the loop halts
when that score reaches the threshold (boundary inclusive). All similarities
are computed in double precision over normalized vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .retrieval import normalize

MAIN_QUESTION = "main_question"


def subquery_source(index: int) -> str:
    """Label for the i-th prior sub-query (1-based) as an argmax source."""
    return f"subquery_{index}"


@dataclass
class QueryHistory:
    """The main question's embedding plus prior sub-query embeddings, in hop order."""

    main_question: np.ndarray
    subqueries: list[np.ndarray] = field(default_factory=list)

    def append(self, vector: np.ndarray) -> None:
        self.subqueries.append(vector)


@dataclass(frozen=True)
class TerminationDecision:
    score: float
    threshold: float
    argmax_source: str  # MAIN_QUESTION or subquery_source(i)
    halt: bool


def score_subquery(query_vector: np.ndarray, history: QueryHistory) -> tuple[float, str]:
    """Max cosine similarity of the candidate against the question history.

    Ties break toward the main question, then the lowest sub-query index.
    Inputs are normalized here, so scores are invariant under positive
    rescaling of any vector.
    """
    q = normalize(query_vector)
    main = normalize(history.main_question)
    if main.shape != q.shape:
        raise ValueError(f"dimension mismatch: query {q.shape} vs history {main.shape}")
    best = float(np.dot(q, main))
    best_source = MAIN_QUESTION
    for i, vector in enumerate(history.subqueries, 1):
        v = normalize(vector)
        if v.shape != q.shape:
            raise ValueError(f"dimension mismatch: query {q.shape} vs sub-query {i} {v.shape}")
        score = float(np.dot(q, v))
        if score > best:
            best = score
            best_source = subquery_source(i)
    return best, best_source


def decide(score: float, tau: float, argmax_source: str = MAIN_QUESTION) -> TerminationDecision:
    """Halt iff score >= tau. The comparison is exact: a score equal to tau halts."""
    if not -1.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [-1, 1]")
    return TerminationDecision(
        score=score, threshold=tau, argmax_source=argmax_source, halt=score >= tau
    )


def evaluate_subquery(
    query_vector: np.ndarray, history: QueryHistory, tau: float
) -> TerminationDecision:
    """Score a candidate sub-query against `history` and apply the threshold."""
    score, source = score_subquery(query_vector, history)
    return decide(score, tau, source)
