import json

import numpy as np
import pytest

from conftest import read_fmx_bytes, read_fmx_dense
from embed_exporter import export_chunked_scores, export_embeddings
from embed_exporter import export as export_mod
from embed_exporter.errors import DataError, UsageError
from embed_exporter.fmx import registry_sidecar_path


def small_rows():
    return [
        {"id": "r1", "briefSummary": "dose was 10 mg daily", "label": 0},
        {"id": "r2", "briefSummary": "dose was 10 mg daily", "label": 1},
        {"id": "r3", "label": 0},  # no text at all
        {"id": "r4", "conditions": "relapsed disease", "locationDetails": "site 4"},
    ]


class TestExportEmbeddings:
    def test_rows_follow_corpus_order(self, write_corpus, tmp_path):
        out = tmp_path / "emb.fmx"
        summary = export_embeddings(write_corpus(small_rows()), "hash:32", out)
        assert summary["rows"] == 4
        assert summary["dim"] == 32
        assert summary["out"] == str(out)

        dense = read_fmx_dense(out)
        assert dense.shape == (4, 32)
        assert np.array_equal(dense[0], dense[1])  # identical documents
        assert np.array_equal(dense[2], np.zeros(32))  # empty text, valid row
        assert np.any(dense[3] != 0)

    def test_registry_records_width_and_category(self, write_corpus, tmp_path):
        out = tmp_path / "emb.fmx"
        export_embeddings(write_corpus(small_rows()), "hash:20", out)
        payload = json.loads(registry_sidecar_path(out).read_text("utf-8"))
        entries = payload["entries"]
        assert len(entries) == 20
        assert entries[0]["name"] == "emb_0000"
        assert entries[-1]["name"] == "emb_0019"
        assert {e["category"] for e in entries} == {"embedding"}

    def test_permuting_corpus_permutes_rows(self, write_corpus, tmp_path):
        rows = small_rows()
        a = export_embeddings(write_corpus(rows, "a.jsonl"), "hash:24", tmp_path / "a.fmx")
        perm = [rows[2], rows[0], rows[3], rows[1]]
        b = export_embeddings(write_corpus(perm, "b.jsonl"), "hash:24", tmp_path / "b.fmx")
        assert a["rows"] == b["rows"] == 4
        da = read_fmx_dense(tmp_path / "a.fmx")
        db = read_fmx_dense(tmp_path / "b.fmx")
        assert np.array_equal(db, da[[2, 0, 3, 1]])

    def test_byte_identical_reruns(self, write_corpus, tmp_path):
        corpus = write_corpus(small_rows())
        export_embeddings(corpus, "hash:16", tmp_path / "a.fmx")
        export_embeddings(corpus, "hash:16", tmp_path / "b.fmx")
        assert (tmp_path / "a.fmx").read_bytes() == (tmp_path / "b.fmx").read_bytes()

    def test_row_count_mismatch_from_model(self, write_corpus, tmp_path, monkeypatch):
        class ShortEmbedder:
            def encode(self, texts, batch_size=32):
                return np.ones((len(texts) - 1, 4), dtype=np.float32)

        monkeypatch.setattr(export_mod, "resolve_embedder", lambda _: ShortEmbedder())
        with pytest.raises(DataError, match="3 embedding rows for 4"):
            export_embeddings(write_corpus(small_rows()), "stub", tmp_path / "e.fmx")

    def test_bad_batch_size_rejected(self, write_corpus, tmp_path):
        with pytest.raises(UsageError, match="batch size"):
            export_embeddings(
                write_corpus(small_rows()), "hash:8", tmp_path / "e.fmx", batch_size=0
            )

    def test_empty_corpus_rejected(self, write_corpus, tmp_path):
        with pytest.raises(DataError, match="no records"):
            export_embeddings(write_corpus([]), "hash:8", tmp_path / "e.fmx")


class TestExportChunkedScores:
    def test_single_token_chunks_reproduce_pooling(self, write_corpus, tmp_path):
        # window 1 / overlap 0 makes every token its own chunk, so the
        # firsttoken scorer turns a document into a literal score list
        corpus = write_corpus(
            [
                {"id": "d1", "briefSummary": "0.1 0.9 0.8 0.2"},
                {"id": "d2", "briefSummary": "0.7"},
            ]
        )
        out = tmp_path / "s.fmx"
        summary = export_chunked_scores(corpus, "firsttoken", 1, 0, 3, out)
        assert summary["rows"] == 2
        assert summary["dropped"] == 0
        dense = read_fmx_dense(out)
        assert dense[0, 0] == np.float32((0.9 + 0.8 + 0.2) / 3)
        assert dense[1, 0] == np.float32(0.7)  # short doc: single chunk probability

    def test_k_one_takes_max_k_large_takes_mean(self, write_corpus, tmp_path):
        corpus = write_corpus([{"id": "d", "briefSummary": "0.1 0.9 0.8 0.2"}])
        export_chunked_scores(corpus, "firsttoken", 1, 0, 1, tmp_path / "max.fmx")
        export_chunked_scores(corpus, "firsttoken", 1, 0, 10, tmp_path / "mean.fmx")
        assert read_fmx_dense(tmp_path / "max.fmx")[0, 0] == np.float32(0.9)
        assert read_fmx_dense(tmp_path / "mean.fmx")[0, 0] == np.float32(0.5)

    def test_const_scorer_defaults(self, write_corpus, tmp_path):
        out = tmp_path / "s.fmx"
        summary = export_chunked_scores(
            write_corpus(small_rows()), "const:0.25", out=out
        )
        assert (summary["window"], summary["overlap"], summary["k"]) == (512, 128, 3)
        assert np.all(read_fmx_dense(out) == np.float32(0.25))
        payload = json.loads(registry_sidecar_path(out).read_text("utf-8"))
        assert payload["entries"] == [
            {"index": 0, "name": "score_const_0_25", "category": "transformer_score"}
        ]

    def test_failed_documents_drop_but_keep_the_rest(self, write_corpus, tmp_path):
        corpus = write_corpus(
            [
                {"id": "good1", "briefSummary": "0.6"},
                {"id": "bad", "briefSummary": "not a probability"},
                {"id": "good2", "briefSummary": "0.3"},
            ]
        )
        out = tmp_path / "s.fmx"
        summary = export_chunked_scores(corpus, "firsttoken", 1, 0, 3, out)
        assert summary["rows"] == 2
        assert summary["dropped"] == 1
        assert summary["dropped_ids"] == ["bad"]
        dense = read_fmx_dense(out)
        assert dense[:, 0].tolist() == [np.float32(0.6), np.float32(0.3)]

    def test_all_documents_dropped_still_writes_a_block(self, write_corpus, tmp_path):
        corpus = write_corpus([{"id": "a", "briefSummary": "x"}, {"id": "b"}])
        out = tmp_path / "s.fmx"
        summary = export_chunked_scores(corpus, "firsttoken", 1, 0, 3, out)
        assert summary["rows"] == 0
        assert summary["dropped"] == 2
        assert summary["dropped_ids"] == ["a", "b"]
        n_rows, n_cols, _, _, _ = read_fmx_bytes(out)
        assert (n_rows, n_cols) == (0, 1)

    def test_out_of_range_score_counts_as_failure(self, write_corpus, tmp_path, monkeypatch):
        class LoudScorer:
            def tokenize(self, text):
                return text.split()

            def max_window(self):
                return None

            def score_chunk(self, tokens):
                return 1.5

        monkeypatch.setattr(export_mod, "resolve_scorer", lambda _: LoudScorer())
        summary = export_chunked_scores(
            write_corpus([{"id": "a", "briefSummary": "text"}]),
            "stub", 4, 0, 1, tmp_path / "s.fmx",
        )
        assert summary["rows"] == 0
        assert summary["dropped_ids"] == ["a"]

    def test_window_above_scorer_limit_rejected(self, write_corpus, tmp_path, monkeypatch):
        class CappedScorer:
            def tokenize(self, text):
                return text.split()

            def max_window(self):
                return 62

            def score_chunk(self, tokens):
                return 0.5

        monkeypatch.setattr(export_mod, "resolve_scorer", lambda _: CappedScorer())
        with pytest.raises(UsageError, match="exceeds"):
            export_chunked_scores(
                write_corpus([{"id": "a"}]), "stub", 512, 128, 3, tmp_path / "s.fmx"
            )

    def test_hash_scorer_is_deterministic_and_order_equivariant(
        self, write_corpus, tmp_path
    ):
        rows = [
            {"id": f"r{i}", "briefSummary": f"patient {i} narrative " * (i + 1)}
            for i in range(6)
        ]
        a = write_corpus(rows, "a.jsonl")
        export_chunked_scores(a, "hash", 8, 2, 3, tmp_path / "s1.fmx")
        export_chunked_scores(a, "hash", 8, 2, 3, tmp_path / "s2.fmx")
        assert (tmp_path / "s1.fmx").read_bytes() == (tmp_path / "s2.fmx").read_bytes()

        perm = [rows[i] for i in (3, 1, 5, 0, 4, 2)]
        b = write_corpus(perm, "b.jsonl")
        export_chunked_scores(b, "hash", 8, 2, 3, tmp_path / "s3.fmx")
        d1 = read_fmx_dense(tmp_path / "s1.fmx")
        d3 = read_fmx_dense(tmp_path / "s3.fmx")
        assert np.array_equal(d3[:, 0], d1[[3, 1, 5, 0, 4, 2], 0])

    @pytest.mark.parametrize(
        "window,overlap,k",
        [(0, 0, 3), (8, 8, 3), (8, -1, 3), (8, 2, 0)],
    )
    def test_bad_window_overlap_k_rejected(self, write_corpus, tmp_path, window, overlap, k):
        corpus = write_corpus([{"id": "a", "briefSummary": "text"}])
        with pytest.raises(UsageError):
            export_chunked_scores(corpus, "const:0.5", window, overlap, k, tmp_path / "s.fmx")

    def test_missing_corpus_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            export_chunked_scores(
                tmp_path / "nope.jsonl", "const:0.5", out=tmp_path / "s.fmx"
            )
