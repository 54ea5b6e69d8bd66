"""Word and character TF-IDF vectorizers plus feature-block assembly.

Both vectorizers share the same machinery: document-frequency filtering,
an optional total-count cap on vocabulary size with lexicographic
tie-breaking, smoothed idf = ln((1+N)/(1+df)) + 1, sublinear tf scaling
(1 + ln tf), and L2 row normalization. Word terms are lowercase
alphanumeric tokens of length >= 2; char terms are n-grams (n in a fixed
range) over the raw lowercased text, spaces included.

Values are computed in float64 and stored as float32 in the matrix.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .corpus import ConcatenatedDoc
from .sparse import CATEGORIES, FeatureRegistry, SparseMatrix

VECTORIZER_SCHEMA_VERSION = 1

_TOKEN = re.compile(r"[a-z0-9]+")


def word_tokens(text: str) -> list[str]:
    return [t for t in _TOKEN.findall(text.lower()) if len(t) >= 2]


def char_ngrams(text: str, lo: int, hi: int) -> list[str]:
    s = text.lower()
    grams: list[str] = []
    for n in range(lo, hi + 1):
        if len(s) < n:
            break
        grams.extend(s[i : i + n] for i in range(len(s) - n + 1))
    return grams


@dataclass
class TfidfConfig:
    ngram_lo: int
    ngram_hi: int
    max_features: int
    min_df: int
    max_df_fraction: float | None
    sublinear_tf: bool = True
    l2_normalize: bool = True


WORD_DEFAULTS = TfidfConfig(
    ngram_lo=1, ngram_hi=1, max_features=2000, min_df=2, max_df_fraction=0.8
)
CHAR_DEFAULTS = TfidfConfig(
    ngram_lo=3, ngram_hi=7, max_features=1000, min_df=2, max_df_fraction=None
)


@dataclass
class VectorizerModel:
    kind: str  # {"word_tfidf", "char_tfidf"}
    vocabulary: dict[str, int]  # term -> column, lexicographic order
    idf: np.ndarray
    config: TfidfConfig

    def terms(self) -> list[str]:
        return list(self.vocabulary)

    def to_json(self) -> dict:
        return {
            "schema_version": VECTORIZER_SCHEMA_VERSION,
            "kind": self.kind,
            "config": asdict(self.config),
            "terms": self.terms(),
            "idf": [float(v) for v in self.idf],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "VectorizerModel":
        if payload.get("schema_version") != VECTORIZER_SCHEMA_VERSION:
            raise DataError("unsupported vectorizer schema version")
        terms = payload["terms"]
        return cls(
            kind=payload["kind"],
            vocabulary={t: i for i, t in enumerate(terms)},
            idf=np.array(payload["idf"], dtype=np.float64),
            config=TfidfConfig(**payload["config"]),
        )


def _terms_of(doc: ConcatenatedDoc, kind: str, config: TfidfConfig) -> list[str]:
    if kind == "word_tfidf":
        return word_tokens(doc.text)
    return char_ngrams(doc.text, config.ngram_lo, config.ngram_hi)


def _fit(docs: list[ConcatenatedDoc], kind: str, config: TfidfConfig) -> VectorizerModel:
    if len(docs) < 2:
        raise DataError("fitting a vectorizer requires at least 2 documents")
    df: Counter[str] = Counter()
    total: Counter[str] = Counter()
    for doc in docs:
        counts = Counter(_terms_of(doc, kind, config))
        df.update(counts.keys())
        total.update(counts)
    n = len(docs)
    max_df = config.max_df_fraction * n if config.max_df_fraction is not None else None
    survivors = [
        t
        for t, d in df.items()
        if d >= config.min_df and (max_df is None or d <= max_df)
    ]
    if not survivors:
        raise DataError("vocabulary is empty after document-frequency filtering")
    if len(survivors) > config.max_features:
        survivors.sort(key=lambda t: (-total[t], t))
        survivors = survivors[: config.max_features]
    survivors.sort()
    idf = np.array(
        [np.log((1 + n) / (1 + df[t])) + 1.0 for t in survivors], dtype=np.float64
    )
    return VectorizerModel(
        kind=kind,
        vocabulary={t: i for i, t in enumerate(survivors)},
        idf=idf,
        config=config,
    )


def fit_word_tfidf(
    docs: list[ConcatenatedDoc], config: TfidfConfig = WORD_DEFAULTS
) -> VectorizerModel:
    return _fit(docs, "word_tfidf", config)


def fit_char_tfidf(
    docs: list[ConcatenatedDoc], config: TfidfConfig = CHAR_DEFAULTS
) -> VectorizerModel:
    return _fit(docs, "char_tfidf", config)


def transform_tfidf(model: VectorizerModel, docs: list[ConcatenatedDoc]) -> SparseMatrix:
    """Rows of (1 + ln tf) * idf, L2-normalized; unseen terms ignored."""
    vocab = model.vocabulary
    rows: list[dict[int, float]] = []
    for doc in docs:
        counts = Counter(_terms_of(doc, model.kind, model.config))
        row: dict[int, float] = {}
        for term, tf in counts.items():
            col = vocab.get(term)
            if col is None:
                continue
            weight = (1.0 + np.log(tf)) if model.config.sublinear_tf else float(tf)
            row[col] = weight * model.idf[col]
        if model.config.l2_normalize and row:
            norm = np.sqrt(sum(v * v for v in row.values()))
            row = {c: v / norm for c, v in row.items()}
        rows.append(row)
    return SparseMatrix.from_rows(rows, n_cols=len(vocab))


_CATEGORY_ORDER = {c: i for i, c in enumerate(CATEGORIES)}


def assemble_features(
    blocks: list[tuple],
) -> tuple[SparseMatrix, FeatureRegistry]:
    """Concatenate feature blocks horizontally with a column registry.

    Each block is (matrix, category) or (matrix, category, names) where
    matrix is a SparseMatrix or dense 2-D array; dense blocks are
    sparsified by dropping exact zeros. Blocks must arrive in the fixed
    category order [medical, word, char, embedding, transformer_score];
    zero-width blocks are skipped entirely.
    """
    prepared: list[tuple[SparseMatrix, str, list[str]]] = []
    for block in blocks:
        if len(block) == 2:
            matrix, category = block
            names = None
        else:
            matrix, category, names = block
        if category not in _CATEGORY_ORDER:
            raise DataError(f"unknown feature category: {category!r}")
        if not isinstance(matrix, SparseMatrix):
            matrix = SparseMatrix.from_dense(np.asarray(matrix))
        if matrix.n_cols == 0:
            continue
        if names is None:
            names = [f"{category}_{j}" for j in range(matrix.n_cols)]
        if len(names) != matrix.n_cols:
            raise DataError(f"{category}: {len(names)} names for {matrix.n_cols} columns")
        prepared.append((matrix, category, list(names)))

    if not prepared:
        raise DataError("no non-empty feature blocks to assemble")
    order = [_CATEGORY_ORDER[c] for _, c, _ in prepared]
    if order != sorted(order) or len(set(order)) != len(order):
        raise DataError(
            "blocks must arrive in category order "
            "[medical, word, char, embedding, transformer_score], each at most once"
        )
    n_rows = prepared[0][0].n_rows
    for matrix, category, _ in prepared:
        if matrix.n_rows != n_rows:
            raise DataError(f"{category}: row count {matrix.n_rows} != {n_rows}")

    registry = FeatureRegistry()
    for _, category, names in prepared:
        registry.append_block(names, category)

    mats = [m for m, _, _ in prepared]
    offsets = np.cumsum([0] + [m.n_cols for m in mats])
    n_cols = int(offsets[-1])
    lens = sum(np.diff(m.row_ptr) for m in mats)
    row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(lens, out=row_ptr[1:])
    nnz = int(row_ptr[-1])
    col_idx = np.zeros(nnz, dtype=np.int64)
    values = np.zeros(nnz, dtype=np.float32)
    for i in range(n_rows):
        pos = int(row_ptr[i])
        for k, m in enumerate(mats):
            lo, hi = int(m.row_ptr[i]), int(m.row_ptr[i + 1])
            col_idx[pos : pos + hi - lo] = m.col_idx[lo:hi] + offsets[k]
            values[pos : pos + hi - lo] = m.values[lo:hi]
            pos += hi - lo
    out = SparseMatrix(n_rows, n_cols, row_ptr, col_idx, values)
    out.validate()
    return out, registry


def save_vectorizers(path: str | Path, word: VectorizerModel, char: VectorizerModel) -> None:
    payload = {
        "schema_version": VECTORIZER_SCHEMA_VERSION,
        "word": word.to_json(),
        "char": char.to_json(),
    }
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def load_vectorizers(path: str | Path) -> tuple[VectorizerModel, VectorizerModel]:
    payload = json.loads(Path(path).read_text("utf-8"))
    if payload.get("schema_version") != VECTORIZER_SCHEMA_VERSION:
        raise DataError("unsupported vectorizer file schema version")
    return (
        VectorizerModel.from_json(payload["word"]),
        VectorizerModel.from_json(payload["char"]),
    )
