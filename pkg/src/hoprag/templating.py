"""Prompt scaffolding: segmented rendering, token counting, and prefix-cache accounting.

Prompts are built as ordered lists of segments. A ``scaffold`` segment is
text the harness prefills (template phrases, the main question, facts,
retrieved contexts); a ``slot`` segment is text the model generated at that
position. Because a question run only ever appends blocks, the flat prompt
at each step is a string-prefix extension of the previous one, which is what
makes reusing previously computed prefill work valid. The
:class:`PrefixCacheRegistry` is the software model of that reuse: it tracks
which whole-segment prefixes have been processed and how many tokens each
covers.

Scaffold text lives in the ``templates/`` package directory as plain text
files with named placeholders, so prompts can be edited without touching
code. Renderers in this module load those files and fill them.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Protocol, Sequence

SCAFFOLD = "scaffold"
SLOT = "slot"

BLOCK_SEPARATOR = "\n\n"

# A fact is one prior hop's response, rendered as a "- ..." line.
Fact = str


class Tokenizer(Protocol):
    """Counts tokens in a string. Must be a pure function of the text."""

    name: str

    def count(self, text: str) -> int: ...


class WhitespaceTokenizer:
    """Counts whitespace-separated tokens; the deterministic offline tokenizer."""

    name = "whitespace"

    def count(self, text: str) -> int:
        return len(text.split())


def count_tokens(tokenizer: Tokenizer, text: str) -> int:
    """Count tokens in `text`; the empty string counts as zero."""
    if not text:
        return 0
    return tokenizer.count(text)


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Load a template file from the package's templates/ directory, byte-exact."""
    return (resources.files("hoprag") / "templates" / name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class Segment:
    text: str
    kind: str  # SCAFFOLD or SLOT
    token_count: int


@dataclass(frozen=True)
class SegmentedPrompt:
    """An ordered list of segments whose concatenation is the flat prompt."""

    segments: tuple[Segment, ...] = ()

    def flat(self) -> str:
        return "".join(seg.text for seg in self.segments)

    @property
    def total_tokens(self) -> int:
        return sum(seg.token_count for seg in self.segments)

    def extend(self, *segments: Segment) -> "SegmentedPrompt":
        return SegmentedPrompt(self.segments + tuple(segments))

    def concat(self, other: "SegmentedPrompt") -> "SegmentedPrompt":
        return SegmentedPrompt(self.segments + other.segments)

    def __bool__(self) -> bool:
        return bool(self.segments)


def scaffold_segment(text: str, tokenizer: Tokenizer) -> Segment:
    return Segment(text=text, kind=SCAFFOLD, token_count=count_tokens(tokenizer, text))


def slot_segment(text: str, tokenizer: Tokenizer) -> Segment:
    return Segment(text=text, kind=SLOT, token_count=count_tokens(tokenizer, text))


def _as_history(history: "SegmentedPrompt | str", tokenizer: Tokenizer) -> SegmentedPrompt:
    """Coerce a history argument to segments.

    The canonical form is the accumulated SegmentedPrompt of all prior
    blocks (preserves segment boundaries for cache matching); a plain string
    is accepted for standalone rendering and becomes one scaffold segment.
    """
    if isinstance(history, SegmentedPrompt):
        return history
    if not history:
        return SegmentedPrompt()
    return SegmentedPrompt((scaffold_segment(history, tokenizer),))


def render_subquery_prompt(
    main_question: str,
    facts: Sequence[Fact],
    history: "SegmentedPrompt | str",
    tokenizer: Tokenizer,
) -> SegmentedPrompt:
    """Render the prompt whose next generated tokens are the hop's sub-query.

    With no facts (hop 1) the facts clause is omitted; at later hops every
    prior response renders as a "- {fact}" line. The block is appended to
    `history` after one blank line, and the flat text ends with
    "Question: " so the model continues with the sub-query itself.
    """
    past = _as_history(history, tokenizer)
    if facts:
        fact_lines = "\n".join(f"- {fact}" for fact in facts)
        block = load_template("subquery_followup.txt").format(
            main_question=main_question, facts=fact_lines
        )
    else:
        block = load_template("subquery_first.txt").format(main_question=main_question)
    if past:
        block = BLOCK_SEPARATOR + block
    return past.extend(scaffold_segment(block, tokenizer))


def format_context_lines(hits: Sequence[tuple[str, str]]) -> str:
    """Render retrieved (title, text) pairs, one per line, in rank order."""
    return "\n".join(f"Title: {title} Text: {text}" for title, text in hits)


def render_context_and_response_scaffold(
    hits: Sequence[tuple[str, str]], tokenizer: Tokenizer
) -> SegmentedPrompt:
    """Render the retrieved-context block ending in "Based on the contexts, ".

    Returns the block alone (callers append it to the current prompt). The
    block starts with a newline, terminating the sub-query line it follows.
    """
    if not hits:
        raise ValueError("at least one retrieved context is required")
    block = "\n" + load_template("context_response.txt").format(
        contexts=format_context_lines(hits)
    )
    return SegmentedPrompt((scaffold_segment(block, tokenizer),))


def render_final_prompt(
    main_question: str,
    last_fact: Fact | None,
    history: "SegmentedPrompt | str",
    tokenizer: Tokenizer,
) -> SegmentedPrompt:
    """Render the closing prompt whose next generated tokens are the final answer.

    When no fact exists (a run that halted before completing any hop) the
    block degrades to the no-facts form rather than inventing evidence.
    """
    past = _as_history(history, tokenizer)
    if last_fact:
        block = load_template("final_with_fact.txt").format(
            last_fact=last_fact, main_question=main_question
        )
    else:
        block = load_template("final_no_facts.txt").format(main_question=main_question)
    if past:
        block = BLOCK_SEPARATOR + block
    return past.extend(scaffold_segment(block, tokenizer))


class PrefixCacheRegistry:
    """Tracks which whole-segment prompt prefixes have been processed.

    Prefixes are keyed by an incremental hash of the concatenated segment
    texts, so two prompts share a cache entry exactly when their prefix
    *text* matches. Safe to share across threads; by default each question
    run gets its own registry.
    """

    def __init__(self) -> None:
        self._prefixes: dict[str, int] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def _prefix_digests(prompt: SegmentedPrompt) -> tuple[list[str], list[int]]:
        digests: list[str] = []
        counts: list[int] = []
        hasher = hashlib.sha256()
        running = 0
        for seg in prompt.segments:
            hasher.update(seg.text.encode("utf-8"))
            running += seg.token_count
            digests.append(hasher.copy().hexdigest())
            counts.append(running)
        return digests, counts

    def register(self, prompt: SegmentedPrompt) -> None:
        """Register every whole-segment prefix of `prompt`. Idempotent."""
        digests, counts = self._prefix_digests(prompt)
        with self._lock:
            for digest, count in zip(digests, counts):
                self._prefixes.setdefault(digest, count)

    def lookup(self, prompt: SegmentedPrompt) -> tuple[int, int]:
        """Return (cached_tokens, new_tokens) for `prompt` and update counters.

        cached_tokens is the token count of the longest whole-segment prefix
        of `prompt` whose text was previously registered; new_tokens is the
        remainder, so cached + new always equals the prompt total.
        """
        digests, counts = self._prefix_digests(prompt)
        total = counts[-1] if counts else 0
        cached = 0
        with self._lock:
            for i in range(len(digests) - 1, -1, -1):
                if digests[i] in self._prefixes:
                    cached = counts[i]
                    break
            if cached > 0:
                self.hits += 1
            else:
                self.misses += 1
        return cached, total - cached

    def registered_count(self, prompt: SegmentedPrompt) -> int | None:
        """Token count stored for the full text of `prompt`, if registered."""
        digests, _ = self._prefix_digests(prompt)
        if not digests:
            return None
        with self._lock:
            return self._prefixes.get(digests[-1])


def cache_lookup(registry: PrefixCacheRegistry, prompt: SegmentedPrompt) -> tuple[int, int]:
    return registry.lookup(prompt)


def cache_register(registry: PrefixCacheRegistry, prompt: SegmentedPrompt) -> None:
    registry.register(prompt)
