"""Closed-form per-layer decode cost, with and without key-value reuse.

Costs count multiply-accumulate units for one transformer layer decoding a
sequence of length T at hidden width d, omitting constant factors such as
head count. Everything is exact integer arithmetic (Python ints), so the
closed forms can be checked against literal summations at any scale.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class CostBreakdown:
    projection_cost: int  # d^2 terms (Q/K/V projections)
    attention_cost: int  # d terms (scores and weighted sums)
    total: int
    seq_len: int
    model_dim: int


def _check(seq_len: int, model_dim: int) -> None:
    if seq_len < 1:
        raise ValueError("seq_len must be >= 1")
    if model_dim < 1:
        raise ValueError("model_dim must be >= 1")


def cost_no_cache(seq_len: int, model_dim: int) -> CostBreakdown:
    """Decode cost when every step recomputes the whole prefix.

    Step t pays t*d^2 for projections and t^2*d for attention; summed over
    all steps the attention term is cubic in the sequence length.
    """
    _check(seq_len, model_dim)
    t, d = seq_len, model_dim
    projection = d * d * t * (t + 1) // 2
    attention = d * t * (t + 1) * (2 * t + 1) // 6
    return CostBreakdown(projection, attention, projection + attention, t, d)


def cost_with_cache(seq_len: int, model_dim: int) -> CostBreakdown:
    """Decode cost when prefix keys/values are kept and only the new token is projected.

    Step t pays d^2 for the new token's projections plus t*d to attend over
    the cached prefix; the cubic recomputation term disappears and the total
    stays quadratic in the sequence length.
    """
    _check(seq_len, model_dim)
    t, d = seq_len, model_dim
    projection = t * d * d
    attention = d * t * (t + 1) // 2
    return CostBreakdown(projection, attention, projection + attention, t, d)


def cost_sliding_window(seq_len: int, model_dim: int, window: int) -> CostBreakdown:
    """Cached decode cost when attention is clamped to the last `window` positions.

    Attention work per step becomes min(t, window)*d, linear in the sequence
    length for a fixed window.
    """
    _check(seq_len, model_dim)
    if window < 1:
        raise ValueError("window must be >= 1")
    t, d, w = seq_len, model_dim, window
    projection = t * d * d
    if t <= w:
        attended = t * (t + 1) // 2
    else:
        attended = w * (w + 1) // 2 + (t - w) * w
    attention = d * attended
    return CostBreakdown(projection, attention, projection + attention, t, d)


def kv_memory(seq_len: int, model_dim: int) -> int:
    """Per-layer cache footprint in stored units: one width-d entry per position."""
    _check(seq_len, model_dim)
    return seq_len * model_dim
