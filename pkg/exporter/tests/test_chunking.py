import pytest
from hypothesis import given
from hypothesis import strategies as st

from embed_exporter.chunking import chunk_starts, top_k_mean, validate_window
from embed_exporter.errors import UsageError


class TestChunkStarts:
    @pytest.mark.parametrize(
        "n_tokens,expected",
        [
            (100, [0]),
            (512, [0]),
            (900, [0, 384]),
            (2000, [0, 384, 768, 1152]),
        ],
    )
    def test_default_window_start_grid(self, n_tokens, expected):
        assert chunk_starts(n_tokens, window=512, overlap=128) == expected

    def test_empty_document_is_one_chunk(self):
        assert chunk_starts(0, 512, 128) == [0]

    def test_one_over_window_still_one_chunk(self):
        # a final shortened chunk is never emitted; the tail goes unscored
        assert chunk_starts(513, 512, 128) == [0]

    def test_exact_two_windows(self):
        assert chunk_starts(896, 512, 128) == [0, 384]  # 384 + 512 == 896
        assert chunk_starts(897, 512, 128) == [0, 384]

    def test_unit_window_enumerates_tokens(self):
        assert chunk_starts(4, window=1, overlap=0) == [0, 1, 2, 3]

    @pytest.mark.parametrize(
        "window,overlap",
        [(0, 0), (-1, 0), (8, -1), (8, 8), (8, 9)],
    )
    def test_bad_window_or_overlap_rejected(self, window, overlap):
        with pytest.raises(UsageError):
            chunk_starts(10, window, overlap)

    def test_validate_window_returns_stride(self):
        assert validate_window(512, 128) == 384
        assert validate_window(1, 0) == 1

    @given(
        n_tokens=st.integers(0, 5000),
        window=st.integers(1, 600),
        overlap_frac=st.floats(0.0, 0.99),
    )
    def test_start_grid_properties(self, n_tokens, window, overlap_frac):
        overlap = int(window * overlap_frac)
        stride = window - overlap
        starts = chunk_starts(n_tokens, window, overlap)
        assert starts[0] == 0
        assert all(b - a == stride for a, b in zip(starts, starts[1:]))
        if n_tokens > window:
            # every chunk is full-width, and no further full window fits
            assert starts[-1] + window <= n_tokens
            assert starts[-1] + stride + window > n_tokens
        else:
            assert starts == [0]


class TestTopKMean:
    def test_top3_of_four(self):
        assert top_k_mean([0.1, 0.9, 0.8, 0.2], 3) == (0.9 + 0.8 + 0.2) / 3

    def test_k1_is_max(self):
        assert top_k_mean([0.4, 0.7, 0.1], 1) == 0.7

    def test_k_at_least_n_is_plain_mean(self):
        scores = [0.4, 0.7, 0.1]
        assert top_k_mean(scores, 3) == sum(scores) / 3
        assert top_k_mean(scores, 50) == sum(scores) / 3

    def test_single_chunk_passthrough(self):
        assert top_k_mean([0.37], 3) == 0.37

    def test_bad_k_rejected(self):
        with pytest.raises(UsageError):
            top_k_mean([0.5], 0)

    def test_empty_scores_rejected(self):
        with pytest.raises(UsageError):
            top_k_mean([], 3)

    @given(
        scores=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=20),
        k=st.integers(1, 25),
        seed=st.integers(0, 10),
    )
    def test_bounds_and_permutation_invariance(self, scores, k, seed):
        import random

        pooled = top_k_mean(scores, k)
        assert min(scores) - 1e-12 <= pooled <= max(scores) + 1e-12
        shuffled = list(scores)
        random.Random(seed).shuffle(shuffled)
        assert top_k_mean(shuffled, k) == pooled
