import json
from pathlib import Path

import numpy as np
import pytest

from dosescreen.corpus import concatenate_corpus, generate_synthetic_corpus
from dosescreen.gbdt import TrainConfig
from dosescreen.medpatterns import extract_pattern_matrix
from dosescreen.vectorize import (
    CHAR_DEFAULTS,
    WORD_DEFAULTS,
    assemble_features,
    fit_char_tfidf,
    fit_word_tfidf,
    transform_tfidf,
)

FIXTURES = Path(__file__).parent / "fixtures"


def fast_config(**overrides) -> TrainConfig:
    """Small-but-real settings so unit tests stay quick."""
    base = dict(
        n_estimators=40,
        learning_rate=0.1,
        num_leaves=15,
        max_depth=5,
        min_child_samples=5,
        lambda_l1=0.0,
        lambda_l2=1.0,
        feature_fraction=1.0,
        bagging_fraction=1.0,
        bagging_freq=1,
        scale_pos_weight=1.0,
        early_stopping_patience=10,
        max_bins=255,
        seed=0,
    )
    base.update(overrides)
    return TrainConfig(**base)


def build_feature_matrix(records, max_word=300, max_char=200):
    from dataclasses import replace
    from dosescreen.medpatterns import FEATURE_NAMES

    docs = concatenate_corpus(records)
    med = extract_pattern_matrix(docs, records)
    word_model = fit_word_tfidf(docs, replace(WORD_DEFAULTS, max_features=max_word))
    char_model = fit_char_tfidf(docs, replace(CHAR_DEFAULTS, max_features=max_char))
    return assemble_features(
        [
            (med, "medical", list(FEATURE_NAMES)),
            (transform_tfidf(word_model, docs), "word", word_model.terms()),
            (transform_tfidf(char_model, docs), "char", char_model.terms()),
        ]
    )


@pytest.fixture(scope="session")
def small_corpus():
    return generate_synthetic_corpus(150, 0.2, 0.8, seed=5)


@pytest.fixture(scope="session")
def small_features(small_corpus):
    matrix, registry = build_feature_matrix(small_corpus)
    y = np.array([r.label for r in small_corpus], dtype=np.int64)
    return matrix, registry, y


@pytest.fixture(scope="session")
def concat_cases():
    with open(FIXTURES / "concat_cases.json", "r", encoding="utf-8") as f:
        return json.load(f)["cases"]
