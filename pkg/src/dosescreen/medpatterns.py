"""Handcrafted medical-pattern features over concatenated documents.

The 43 features come in a fixed order: 29 regex flags (dose units, dose
calculations, routes, frequencies, dose concepts, special populations,
error keywords), 4 match counts, 4 text statistics, and 5 study-metadata
passthroughs. The regexes live in ``resources/pattern_bank.json`` so tests
and sibling tools can load the exact same expressions.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib.resources import files

import numpy as np

from .corpus import ConcatenatedDoc, NarrativeRecord

_WORD_RUN = re.compile(r"[a-zA-Z0-9]+")
_SENTENCE_RUN = re.compile(r"[.!?]+")
_ALPHA_CHAR = re.compile(r"[a-zA-Z]")


def _load_bank() -> list[dict]:
    payload = files("dosescreen").joinpath("resources/pattern_bank.json").read_text("utf-8")
    return json.loads(payload)["features"]


_BANK = _load_bank()
FEATURE_NAMES: tuple[str, ...] = tuple(e["name"] for e in _BANK)
N_FEATURES = len(FEATURE_NAMES)

_COMPILED: dict[str, re.Pattern] = {
    e["name"]: re.compile(e["pattern"], re.IGNORECASE)
    for e in _BANK
    if "pattern" in e
}


def pattern_bank() -> list[tuple[str, str]]:
    """(feature_name, pattern-or-definition) for every feature, bank order."""
    return [(e["name"], e.get("pattern") or e["definition"]) for e in _BANK]


@dataclass
class MedPatternVector:
    values: np.ndarray
    names: tuple[str, ...] = FEATURE_NAMES


def _statistic(name: str, text: str) -> float:
    if name == "text_length":
        return float(len(text))
    if name == "word_count":
        return float(len(_WORD_RUN.findall(text)))
    if name == "sentence_count":
        return float(len(_SENTENCE_RUN.findall(text)))
    if name == "avg_word_length":
        n_words = len(_WORD_RUN.findall(text))
        if n_words == 0:
            return 0.0
        return len(_ALPHA_CHAR.findall(text)) / n_words
    raise KeyError(name)


def extract_medical_patterns(
    doc: ConcatenatedDoc, record: NarrativeRecord
) -> MedPatternVector:
    """Compute all 43 values for one document. Total function, no errors."""
    text = doc.text
    values = np.zeros(N_FEATURES, dtype=np.float64)
    for i, entry in enumerate(_BANK):
        kind = entry["kind"]
        name = entry["name"]
        if kind == "flag":
            values[i] = 1.0 if _COMPILED[name].search(text) else 0.0
        elif kind == "count":
            if "pattern" in entry:
                values[i] = float(len(_COMPILED[name].findall(text)))
            else:
                values[i] = float(
                    sum(len(_COMPILED[dep].findall(text)) for dep in entry["sum_of"])
                )
        elif kind == "statistic":
            values[i] = _statistic(name, text)
        else:  # metadata passthrough
            raw = getattr(record, entry["source"])
            values[i] = float(raw) if raw is not None else 0.0
    return MedPatternVector(values=values)


def extract_pattern_matrix(
    docs: list[ConcatenatedDoc], records: list[NarrativeRecord]
) -> np.ndarray:
    """Stack per-document vectors into an (n_docs, 43) float array."""
    out = np.zeros((len(docs), N_FEATURES), dtype=np.float64)
    for i, (doc, rec) in enumerate(zip(docs, records)):
        out[i] = extract_medical_patterns(doc, rec).values
    return out
