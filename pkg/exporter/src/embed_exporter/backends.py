"""Embedding models and chunk scorers, resolved from id strings.

Pretrained backends (the normal case) load lazily so the package stays
importable without the model libraries installed:

- any other embedding id is treated as a sentence-transformers model
  name or local path, e.g. ``sentence-transformers/all-MiniLM-L6-v2``;
- any other scorer id is treated as a sequence-classification
  checkpoint loadable by transformers (name or local path).

A few deterministic built-ins cover offline runs and make the export
plumbing testable without any checkpoint:

- ``hash:<dim>``     embedder: signed token hashing, L2-normalised;
- ``const:<p>``      scorer: every chunk scores p;
- ``firsttoken``     scorer: a chunk's first token *is* its probability
                     (raises on anything unparseable, which also
                     exercises the dropped-row path);
- ``hash``           scorer: stable pseudo-probability of the chunk text.

Scorers own their notion of a token: chunk windows are counted in
whatever units ``tokenize`` returns, so pretrained scorers window over
their own subword pieces while the built-ins window over whitespace
tokens.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ModelError, ScorerError, UsageError


def _digest64(payload: str) -> int:
    """Stable 64-bit digest of a string (process- and platform-independent)."""
    return int.from_bytes(
        hashlib.blake2b(payload.encode("utf-8"), digest_size=8).digest(), "big"
    )


# ---------------------------------------------------------------------------
# embedders


class HashEmbedder:
    """Signed feature hashing of whitespace tokens, L2-normalised.

    Deterministic and dependency-free; carries no semantics beyond token
    overlap. Empty text embeds to the zero row, which is still a valid
    row of the declared width.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise UsageError(f"hash embedder needs dim >= 1, got {dim}")
        self.dim = dim

    def encode(self, texts: list[str], batch_size: int = 32) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            for token in text.split():
                v = _digest64(token)
                sign = 1.0 if (v >> 63) & 1 else -1.0
                out[i, v % self.dim] += sign
            norm = np.linalg.norm(out[i])
            if norm > 0.0:
                out[i] /= norm
        return out.astype(np.float32)


class SentenceTransformerEmbedder:
    """Any sentence-transformers checkpoint, by hub name or local path."""

    def __init__(self, model_id: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as e:
            raise ModelError(
                f"embedding model {model_id!r} needs the sentence-transformers "
                "package (pip install sentence-transformers)"
            ) from e
        try:
            self.model = SentenceTransformer(model_id)
        except Exception as e:
            raise ModelError(f"cannot load embedding model {model_id!r}: {e}") from e

    def encode(self, texts: list[str], batch_size: int = 32) -> np.ndarray:
        try:
            out = self.model.encode(
                list(texts),
                batch_size=batch_size,
                convert_to_numpy=True,
                show_progress_bar=False,
            )
        except Exception as e:
            raise ModelError(f"embedding inference failed: {e}") from e
        return np.asarray(out, dtype=np.float32)


def resolve_embedder(model_id: str):
    if model_id.startswith("hash:"):
        try:
            dim = int(model_id[len("hash:") :])
        except ValueError as e:
            raise UsageError(f"bad hash embedder id {model_id!r} (want hash:<dim>)") from e
        return HashEmbedder(dim)
    return SentenceTransformerEmbedder(model_id)


# ---------------------------------------------------------------------------
# chunk scorers


class ConstScorer:
    """Every chunk scores the same probability."""

    def __init__(self, p: float):
        if not 0.0 <= p <= 1.0:
            raise UsageError(f"const scorer probability must lie in [0, 1], got {p}")
        self.p = p

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def max_window(self) -> int | None:
        return None

    def score_chunk(self, tokens: list[str]) -> float:
        return self.p


class FirstTokenScorer:
    """Reads the chunk's first token as its probability.

    Gives tests byte-level control over per-chunk scores: plant a float
    at each expected window start and anything mis-chunked surfaces as a
    ScorerError instead of a silently wrong number.
    """

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def max_window(self) -> int | None:
        return None

    def score_chunk(self, tokens: list[str]) -> float:
        if not tokens:
            raise ScorerError("empty chunk")
        try:
            p = float(tokens[0])
        except ValueError as e:
            raise ScorerError(f"first token {tokens[0]!r} is not a probability") from e
        if not 0.0 <= p <= 1.0:
            raise ScorerError(f"first token {tokens[0]!r} is outside [0, 1]")
        return p


class HashScorer:
    """Stable pseudo-probability of the chunk text in [0, 1)."""

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def max_window(self) -> int | None:
        return None

    def score_chunk(self, tokens: list[str]) -> float:
        return _digest64(" ".join(tokens)) / 2.0**64


class TransformersScorer:
    """Any sequence-classification checkpoint, by hub name or local path.

    Chunks are windows over the checkpoint's own subword tokens. Each
    window is framed with the tokenizer's declared leading (cls/bos) and
    trailing (sep/eos) special ids and scored as the probability of the
    last label index (the positive class of a binary head), or through a
    sigmoid for single-logit heads.
    """

    def __init__(self, model_id: str):
        try:
            import torch
            from transformers import AutoModelForSequenceClassification, AutoTokenizer
        except ImportError as e:
            raise ModelError(
                f"scorer {model_id!r} needs the transformers and torch packages"
            ) from e
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_id)
            self.model = AutoModelForSequenceClassification.from_pretrained(model_id)
        except Exception as e:
            raise ModelError(f"cannot load scorer {model_id!r}: {e}") from e
        self._torch = torch
        self.model.eval()
        self._n_special = int(self.tokenizer.num_special_tokens_to_add())

    def tokenize(self, text: str) -> list[str]:
        return self.tokenizer.tokenize(text)

    def max_window(self) -> int | None:
        limit = getattr(self.tokenizer, "model_max_length", None)
        # unset limits surface as a huge sentinel value
        if limit is None or limit > 1_000_000:
            return None
        return int(limit) - self._n_special

    def _frame(self, ids: list[int]) -> list[int]:
        head = self.tokenizer.cls_token_id
        if head is None:
            head = self.tokenizer.bos_token_id
        tail = self.tokenizer.sep_token_id
        if tail is None:
            tail = self.tokenizer.eos_token_id
        if head is not None:
            ids = [head] + ids
        if tail is not None:
            ids = ids + [tail]
        return ids

    def score_chunk(self, tokens: list[str]) -> float:
        torch = self._torch
        try:
            ids = self._frame(self.tokenizer.convert_tokens_to_ids(list(tokens)))
            with torch.no_grad():
                logits = self.model(input_ids=torch.tensor([ids])).logits
            if logits.shape[-1] == 1:
                prob = torch.sigmoid(logits)[0, 0].item()
            else:
                prob = torch.softmax(logits, dim=-1)[0, -1].item()
        except Exception as e:
            raise ScorerError(f"scorer inference failed: {e}") from e
        return float(prob)


def resolve_scorer(scorer_id: str):
    if scorer_id.startswith("const:"):
        try:
            p = float(scorer_id[len("const:") :])
        except ValueError as e:
            raise UsageError(f"bad const scorer id {scorer_id!r} (want const:<p>)") from e
        return ConstScorer(p)
    if scorer_id == "firsttoken":
        return FirstTokenScorer()
    if scorer_id == "hash":
        return HashScorer()
    return TransformersScorer(scorer_id)
