import json
import math
import random
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from dosescreen.corpus import ConcatenatedDoc
from dosescreen.errors import DataError
from dosescreen.sparse import SparseMatrix
from dosescreen.vectorize import (
    CHAR_DEFAULTS,
    WORD_DEFAULTS,
    TfidfConfig,
    assemble_features,
    char_ngrams,
    fit_char_tfidf,
    fit_word_tfidf,
    load_vectorizers,
    save_vectorizers,
    transform_tfidf,
    word_tokens,
)


def docs_from(texts):
    return [ConcatenatedDoc(id=f"d{i}", text=t, label=0) for i, t in enumerate(texts)]


class TestTokenizers:
    def test_word_tokens(self):
        assert word_tokens("A a1 bb-cc X") == ["a1", "bb", "cc"]
        assert word_tokens("mg 10mg 5") == ["mg", "10mg"]
        assert word_tokens("") == []

    def test_char_ngrams_include_spaces(self):
        grams = char_ngrams("ab cd", 3, 3)
        assert grams == ["ab ", "b c", " cd"]

    def test_char_ngram_span(self):
        text = "abcdefgh"
        grams = char_ngrams(text, 3, 5)
        assert len(grams) == (8 - 3 + 1) + (8 - 4 + 1) + (8 - 5 + 1)
        assert "abc" in grams and "defgh" in grams

    def test_char_ngrams_lowercase(self):
        assert char_ngrams("ABC", 3, 3) == ["abc"]


def brute_force_tfidf(train_texts, eval_texts, config: TfidfConfig, kind: str):
    """Independent direct-formula implementation used as the oracle."""

    def terms(text):
        if kind == "word":
            return word_tokens(text)
        return char_ngrams(text, config.ngram_lo, config.ngram_hi)

    n = len(train_texts)
    df = Counter()
    total = Counter()
    for text in train_texts:
        ts = terms(text)
        total.update(ts)
        df.update(set(ts))
    vocab_terms = [t for t in df if df[t] >= config.min_df]
    if config.max_df_fraction is not None:
        vocab_terms = [t for t in vocab_terms if df[t] <= config.max_df_fraction * n]
    vocab_terms.sort(key=lambda t: (-total[t], t))
    vocab_terms = sorted(vocab_terms[: config.max_features])
    col = {t: j for j, t in enumerate(vocab_terms)}
    idf = {t: math.log((1 + n) / (1 + df[t])) + 1.0 for t in vocab_terms}

    out = np.zeros((len(eval_texts), len(vocab_terms)))
    for i, text in enumerate(eval_texts):
        counts = Counter(t for t in terms(text) if t in col)
        for t, c in counts.items():
            tf = 1.0 + math.log(c) if config.sublinear_tf else float(c)
            out[i, col[t]] = tf * idf[t]
        norm = math.sqrt((out[i] ** 2).sum())
        if config.l2_normalize and norm > 0:
            out[i] /= norm
    return vocab_terms, out


WORDS = ("dose mg ml daily oral error max renal liver titrate study arm "
         "patient visit protocol ten twenty units").split()


def random_corpus(rng, n_docs, max_len=12):
    return [" ".join(rng.choices(WORDS, k=rng.randint(1, max_len))) for _ in range(n_docs)]


class TestAgainstBruteForce:
    @pytest.mark.parametrize("kind", ["word", "char"])
    def test_random_corpora(self, kind):
        rng = random.Random(17)
        for trial in range(20):
            texts = random_corpus(rng, rng.randint(2, 10))
            config = replace(
                WORD_DEFAULTS if kind == "word" else CHAR_DEFAULTS,
                max_features=rng.randint(3, 30),
                min_df=rng.randint(1, 2),
            )
            if kind == "char":
                config = replace(config, ngram_lo=3, ngram_hi=4)
            docs = docs_from(texts)
            try:
                model = (fit_word_tfidf if kind == "word" else fit_char_tfidf)(docs, config)
            except DataError:
                # every term filtered out; the oracle must agree nothing survives
                vocab, _ = brute_force_tfidf(texts, texts, config, kind)
                assert vocab == []
                continue
            vocab, expected = brute_force_tfidf(texts, texts, config, kind)
            assert model.terms() == vocab
            got = transform_tfidf(model, docs).to_dense()
            np.testing.assert_allclose(got, expected, atol=1e-6)

    def test_transform_on_unseen_documents(self):
        train = docs_from(["dose mg daily", "dose ml daily", "error max dose"])
        model = fit_word_tfidf(train, replace(WORD_DEFAULTS, min_df=1))
        eval_texts = ["dose unseen mg", "nothing matches here"]
        vocab, expected = brute_force_tfidf(
            [d.text for d in train], eval_texts, replace(WORD_DEFAULTS, min_df=1), "word"
        )
        got = transform_tfidf(model, docs_from(eval_texts)).to_dense()
        np.testing.assert_allclose(got, expected, atol=1e-6)


class TestFitRules:
    def test_min_df_drops_singletons(self):
        docs = docs_from(["aa bb", "aa cc", "aa dd"])
        model = fit_word_tfidf(
            docs, replace(WORD_DEFAULTS, min_df=2, max_df_fraction=None)
        )
        assert model.terms() == ["aa"]

    def test_max_df_boundary_keeps_at_fraction(self):
        # term at exactly 80% of docs stays; above it goes
        texts = ["on filler%d" % i for i in range(8)] + ["off filler8", "off filler9"]
        docs = docs_from(texts)
        model = fit_word_tfidf(docs, replace(WORD_DEFAULTS, min_df=1))
        assert "on" in model.terms()  # df 8 <= 0.8 * 10
        nine = docs_from(["on x%d" % i for i in range(9)] + ["off y"])
        model9 = fit_word_tfidf(nine, replace(WORD_DEFAULTS, min_df=1))
        assert "on" not in model9.terms()  # df 9 > 8

    def test_cap_prefers_frequent_then_lexicographic(self):
        # bb occurs 3 times, aa and cc twice each -> cap 2 keeps bb and aa
        docs = docs_from(["bb bb aa", "bb cc aa cc"])
        model = fit_word_tfidf(
            docs,
            replace(WORD_DEFAULTS, min_df=1, max_features=2, max_df_fraction=None),
        )
        assert model.terms() == ["aa", "bb"]  # final order is lexicographic

    def test_idf_formula(self):
        docs = docs_from(["aa bb", "aa cc"])
        model = fit_word_tfidf(
            docs, replace(WORD_DEFAULTS, min_df=1, max_df_fraction=None)
        )
        by_term = dict(zip(model.terms(), model.idf))
        assert by_term["aa"] == pytest.approx(math.log(3 / 3) + 1)
        assert by_term["bb"] == pytest.approx(math.log(3 / 2) + 1)

    def test_sublinear_tf(self):
        docs = docs_from(["aa aa aa bb", "aa bb"])
        model = fit_word_tfidf(
            docs, replace(WORD_DEFAULTS, min_df=1, max_df_fraction=None)
        )
        row = transform_tfidf(model, docs[:1]).to_dense()[0]
        by_term = dict(zip(model.terms(), row))
        idf = dict(zip(model.terms(), model.idf))
        expected_aa = (1 + math.log(3)) * idf["aa"]
        expected_bb = 1.0 * idf["bb"]
        norm = math.hypot(expected_aa, expected_bb)
        assert by_term["aa"] == pytest.approx(expected_aa / norm, abs=1e-7)
        assert by_term["bb"] == pytest.approx(expected_bb / norm, abs=1e-7)

    def test_rows_are_unit_length(self, small_corpus):
        from dosescreen.corpus import concatenate_corpus

        docs = concatenate_corpus(small_corpus)
        model = fit_word_tfidf(docs)
        norms = np.linalg.norm(transform_tfidf(model, docs).to_dense(), axis=1)
        np.testing.assert_allclose(norms[norms > 0], 1.0, atol=1e-6)

    def test_fit_order_invariance(self):
        texts = ["dose mg daily", "error dose ml", "max dose mg", "renal daily"]
        a = fit_word_tfidf(docs_from(texts), replace(WORD_DEFAULTS, min_df=1))
        b = fit_word_tfidf(docs_from(texts[::-1]), replace(WORD_DEFAULTS, min_df=1))
        assert a.terms() == b.terms()
        np.testing.assert_array_equal(a.idf, b.idf)

    def test_needs_two_documents(self):
        with pytest.raises(DataError):
            fit_word_tfidf(docs_from(["only one"]))

    def test_empty_vocabulary_rejected(self):
        with pytest.raises(DataError):
            fit_word_tfidf(docs_from(["aa", "bb"]), replace(WORD_DEFAULTS, min_df=3))


class TestAssembly:
    def test_offsets_names_and_categories(self):
        med = np.array([[1.0, 0.0], [0.0, 2.0]])
        word = SparseMatrix.from_rows([{0: 0.5}, {1: 0.25}], n_cols=2)
        matrix, registry = assemble_features(
            [(med, "medical", ["m1", "m2"]), (word, "word", ["w1", "w2"])]
        )
        assert matrix.n_cols == 4
        assert registry.names == ["m1", "m2", "w1", "w2"]
        assert registry.categories == ["medical", "medical", "word", "word"]
        np.testing.assert_array_equal(
            matrix.to_dense(), [[1, 0, 0.5, 0], [0, 2, 0, 0.25]]
        )

    def test_auto_names(self):
        matrix, registry = assemble_features([(np.eye(2), "word")])
        assert registry.names == ["word_0", "word_1"]

    def test_category_order_enforced(self):
        with pytest.raises(DataError):
            assemble_features([(np.eye(2), "word"), (np.eye(2), "medical")])

    def test_duplicate_category_rejected(self):
        with pytest.raises(DataError):
            assemble_features([(np.eye(2), "word"), (np.eye(2), "word")])

    def test_row_mismatch_rejected(self):
        with pytest.raises(DataError):
            assemble_features([(np.eye(2), "medical"), (np.eye(3), "word")])

    def test_zero_width_block_skipped(self):
        matrix, registry = assemble_features(
            [(np.zeros((2, 0)), "medical"), (np.eye(2), "word")]
        )
        assert matrix.n_cols == 2
        assert registry.categories == ["word", "word"]


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        docs = docs_from(["dose mg daily", "error dose ml", "max dose mg"])
        word = fit_word_tfidf(docs, replace(WORD_DEFAULTS, min_df=1))
        char = fit_char_tfidf(docs, replace(CHAR_DEFAULTS, min_df=1, max_features=40))
        path = tmp_path / "vec.json"
        save_vectorizers(path, word, char)
        word2, char2 = load_vectorizers(path)
        for a, b in ((word, word2), (char, char2)):
            assert a.terms() == b.terms()
            np.testing.assert_array_equal(a.idf, b.idf)
            assert transform_tfidf(a, docs).equals(transform_tfidf(b, docs))

    def test_bad_schema_version_rejected(self, tmp_path):
        docs = docs_from(["dose mg", "dose ml"])
        word = fit_word_tfidf(docs, replace(WORD_DEFAULTS, min_df=1))
        char = fit_char_tfidf(docs, replace(CHAR_DEFAULTS, min_df=1))
        path = tmp_path / "vec.json"
        save_vectorizers(path, word, char)
        payload = json.loads(path.read_text(encoding="utf-8"))
        payload["schema_version"] = 999
        path.write_text(json.dumps(payload), encoding="utf-8")
        with pytest.raises(DataError):
            load_vectorizers(path)
