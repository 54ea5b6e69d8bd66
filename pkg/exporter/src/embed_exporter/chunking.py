"""Sliding-window chunking and top-k mean pooling for long documents.

Scorers cap their input length, so documents are split into fixed-size
token windows that overlap by a fixed amount; each window is scored on
its own and the document keeps the mean of its k highest chunk scores.
Taking the top k emphasises the riskiest segments while averaging away
single-chunk noise.
"""

from __future__ import annotations

from .errors import UsageError


def validate_window(window: int, overlap: int) -> int:
    """Check window/overlap and return the stride between chunk starts."""
    if window < 1:
        raise UsageError(f"window must be >= 1, got {window}")
    if overlap < 0 or overlap >= window:
        raise UsageError(
            f"overlap must lie in [0, window), got overlap={overlap} window={window}"
        )
    return window - overlap


def chunk_starts(n_tokens: int, window: int, overlap: int) -> list[int]:
    """Token offsets at which windows begin.

    Starts advance by ``window - overlap``. A document that fits in one
    window (including an empty one) yields the single start 0. For longer
    documents, starts are every stride step whose full window still fits;
    up to stride-1 trailing tokens may go unscored, because a final
    shortened chunk would be scored on different footing than the rest.
    """
    stride = validate_window(window, overlap)
    if n_tokens <= window:
        return [0]
    return list(range(0, n_tokens - window + 1, stride))


def top_k_mean(scores: list[float], k: int) -> float:
    """Mean of the min(k, len) highest scores.

    k=1 degenerates to max; k >= len(scores) to the plain mean.
    """
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    if not scores:
        raise UsageError("top_k_mean needs at least one score")
    top = sorted(scores, reverse=True)[: min(k, len(scores))]
    return sum(top) / len(top)
