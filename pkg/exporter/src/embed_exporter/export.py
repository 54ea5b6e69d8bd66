"""The two export operations: embedding blocks and chunked score columns.

Both read a corpus JSONL, run a backend over the assembled document
text, and write one FMX1 block whose rows follow corpus order. Width is
taken from the backend at runtime, never hard-coded, and recorded in the
registry sidecar.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .backends import resolve_embedder, resolve_scorer
from .chunking import chunk_starts, top_k_mean, validate_window
from .errors import DataError, ScorerError, UsageError
from .fmx import write_block
from .records import load_documents

SUMMARY_SCHEMA_VERSION = 1


def _nonempty_documents(corpus: str | Path):
    docs = load_documents(corpus)
    if not docs:
        raise DataError(f"{corpus}: corpus has no records")
    return docs


def export_embeddings(
    corpus: str | Path,
    model_id: str,
    out: str | Path,
    batch_size: int = 32,
) -> dict:
    """Embed every document and write one row per corpus record.

    The block width is whatever the model emits; registry columns are
    named emb_0000..emb_{D-1} under the ``embedding`` category.
    """
    if batch_size < 1:
        raise UsageError(f"batch size must be >= 1, got {batch_size}")
    docs = _nonempty_documents(corpus)
    embedder = resolve_embedder(model_id)
    matrix = np.asarray(embedder.encode([d.text for d in docs], batch_size=batch_size))
    if matrix.ndim != 2 or matrix.shape[0] != len(docs):
        got = matrix.shape[0] if matrix.ndim == 2 else f"shape {matrix.shape}"
        raise DataError(
            f"model returned {got} embedding rows for {len(docs)} corpus records"
        )
    dim = int(matrix.shape[1])
    names = [f"emb_{j:04d}" for j in range(dim)]
    written = write_block(out, matrix, names, "embedding")
    return {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "rows": written["rows"],
        "dim": dim,
        "nnz": written["nnz"],
        "model": model_id,
        "out": str(out),
    }


def _slug(scorer_id: str) -> str:
    """Registry-friendly column tag for a scorer id (hub path, file, or built-in)."""
    tail = scorer_id.rstrip("/").split("/")[-1]
    return re.sub(r"[^a-z0-9]+", "_", tail.lower()).strip("_") or "scorer"


def export_chunked_scores(
    corpus: str | Path,
    scorer_id: str,
    window: int = 512,
    overlap: int = 128,
    k: int = 3,
    out: str | Path = "scores.fmx",
) -> dict:
    """Score every document through sliding windows and top-k mean pooling.

    Documents the scorer fails on are dropped from the block (their ids
    are reported in the summary) rather than aborting the run, so one
    pathological narrative cannot sink a long export. Scores outside
    [0, 1] count as a scorer failure too.
    """
    validate_window(window, overlap)
    if k < 1:
        raise UsageError(f"topk must be >= 1, got {k}")
    docs = _nonempty_documents(corpus)
    scorer = resolve_scorer(scorer_id)
    limit = scorer.max_window()
    if limit is not None and window > limit:
        raise UsageError(
            f"window {window} exceeds what scorer {scorer_id!r} accepts ({limit})"
        )

    pooled: list[float] = []
    dropped: list[str] = []
    for doc in docs:
        tokens = scorer.tokenize(doc.text)
        try:
            probs = []
            for start in chunk_starts(len(tokens), window, overlap):
                p = scorer.score_chunk(tokens[start : start + window])
                if not 0.0 <= p <= 1.0:
                    raise ScorerError(f"chunk score {p!r} is outside [0, 1]")
                probs.append(p)
        except ScorerError:
            dropped.append(doc.id)
            continue
        pooled.append(top_k_mean(probs, k))

    column = np.asarray(pooled, dtype=np.float64).reshape(len(pooled), 1)
    written = write_block(out, column, [f"score_{_slug(scorer_id)}"], "transformer_score")
    return {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "rows": written["rows"],
        "dropped": len(dropped),
        "dropped_ids": dropped,
        "scorer": scorer_id,
        "window": window,
        "overlap": overlap,
        "k": k,
        "out": str(out),
    }
