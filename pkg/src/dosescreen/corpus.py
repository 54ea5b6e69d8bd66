"""Trial-record ingest, nine-field concatenation, and synthetic corpora.

Records arrive as JSONL, one object per line, keys matching the registry
field names below. The nine text fields are optional; a missing key is a
missing field, which is not the same thing as an empty string. Documents
are the order-preserving single-space join of the present, non-empty
fields.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path

from .errors import DataError, UsageError

#: Join order for document text. This is also the JSONL key order.
TEXT_FIELDS = (
    "briefSummary",
    "detailedDescription",
    "protocolPdfText",
    "armDescriptions",
    "interventionDescriptions",
    "interventionNames",
    "conditions",
    "conditionsKeywords",
    "locationDetails",
)

#: Structured registry metadata carried alongside the text.
META_FIELDS = (
    "numTrials",
    "numConditions",
    "enrollmentCount",
    "phaseEncoded",
    "studyTypeEncoded",
)

STATS_SCHEMA_VERSION = 1


@dataclass
class NarrativeRecord:
    """One trial sample. Attribute names match the JSONL keys exactly."""

    id: str
    label: int
    briefSummary: str | None = None
    detailedDescription: str | None = None
    protocolPdfText: str | None = None
    armDescriptions: str | None = None
    interventionDescriptions: str | None = None
    interventionNames: str | None = None
    conditions: str | None = None
    conditionsKeywords: str | None = None
    locationDetails: str | None = None
    numTrials: int | None = None
    numConditions: int | None = None
    enrollmentCount: int | None = None
    phaseEncoded: int | None = None
    studyTypeEncoded: int | None = None

    def to_dict(self) -> dict:
        """JSON-ready dict; absent optional fields are omitted, not null."""
        out: dict = {"id": self.id}
        for name in TEXT_FIELDS + META_FIELDS:
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        out["label"] = self.label
        return out


@dataclass
class ConcatenatedDoc:
    id: str
    text: str
    label: int


def _expect_str(value, key: str, line_no: int) -> str:
    if not isinstance(value, str):
        raise DataError(f"line {line_no}: field {key!r} must be a string")
    return value


def _expect_int(value, key: str, line_no: int, lo: int, hi: int | None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise DataError(f"line {line_no}: field {key!r} must be an integer")
    if value < lo or (hi is not None and value > hi):
        bound = f">= {lo}" if hi is None else f"in [{lo}, {hi}]"
        raise DataError(f"line {line_no}: field {key!r} must be {bound}, got {value}")
    return value


_META_BOUNDS = {
    "numTrials": (0, None),
    "numConditions": (0, None),
    "enrollmentCount": (0, None),
    "phaseEncoded": (0, 4),
    "studyTypeEncoded": (0, 2),
}
_KNOWN_KEYS = {"id", "label", *TEXT_FIELDS, *META_FIELDS}


def parse_record(obj: dict, line_no: int = 0) -> NarrativeRecord:
    if not isinstance(obj, dict):
        raise DataError(f"line {line_no}: record must be a JSON object")
    unknown = set(obj) - _KNOWN_KEYS
    if unknown:
        raise DataError(f"line {line_no}: unknown keys {sorted(unknown)}")
    if "id" not in obj or not isinstance(obj["id"], str) or not obj["id"]:
        raise DataError(f"line {line_no}: 'id' must be a non-empty string")
    if "label" not in obj:
        raise DataError(f"line {line_no}: missing 'label'")
    label = obj["label"]
    if isinstance(label, bool) or label not in (0, 1):
        raise DataError(f"line {line_no}: 'label' must be 0 or 1, got {label!r}")
    kwargs: dict = {"id": obj["id"], "label": label}
    for key in TEXT_FIELDS:
        if key in obj and obj[key] is not None:
            kwargs[key] = _expect_str(obj[key], key, line_no)
    for key in META_FIELDS:
        if key in obj and obj[key] is not None:
            lo, hi = _META_BOUNDS[key]
            kwargs[key] = _expect_int(obj[key], key, line_no, lo, hi)
    return NarrativeRecord(**kwargs)


def load_corpus(path: str | Path, format: str = "jsonl") -> list[NarrativeRecord]:
    """Read records in file order; duplicate ids and bad labels are errors."""
    if format != "jsonl":
        raise UsageError(f"unsupported corpus format: {format!r}")
    records: list[NarrativeRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"line {line_no}: malformed JSON ({e.msg})") from e
            rec = parse_record(obj, line_no)
            if rec.id in seen:
                raise DataError(f"line {line_no}: duplicate id {rec.id!r}")
            seen.add(rec.id)
            records.append(rec)
    return records


def save_corpus(records: list[NarrativeRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec.to_dict(), ensure_ascii=False, separators=(",", ":")))
            f.write("\n")


def concatenate_fields(record: NarrativeRecord) -> ConcatenatedDoc:
    """Single-space join of present, non-empty text fields in declared order.

    Whitespace-only values count as empty but present values are joined
    verbatim, so every included field stays a substring of the result.
    """
    parts = []
    for name in TEXT_FIELDS:
        value = getattr(record, name)
        if value is not None and value.strip():
            parts.append(value)
    return ConcatenatedDoc(id=record.id, text=" ".join(parts), label=record.label)


def concatenate_corpus(records: list[NarrativeRecord]) -> list[ConcatenatedDoc]:
    return [concatenate_fields(r) for r in records]


def _nearest_rank(sorted_vals: list[int], q: float) -> int:
    rank = max(1, math.ceil(q * len(sorted_vals)))
    return sorted_vals[rank - 1]


@dataclass
class CorpusStats:
    n_docs: int
    n_positive: int
    n_negative: int
    positive_rate: float
    length_min: int
    length_q25: int
    length_median: int
    length_q75: int
    length_max: int
    length_mean: float

    def to_json(self) -> dict:
        return {
            "schema_version": STATS_SCHEMA_VERSION,
            "n_docs": self.n_docs,
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
            "positive_rate": self.positive_rate,
            "length": {
                "min": self.length_min,
                "q25": self.length_q25,
                "median": self.length_median,
                "q75": self.length_q75,
                "max": self.length_max,
                "mean": self.length_mean,
            },
        }


def corpus_stats(docs: list[ConcatenatedDoc]) -> CorpusStats:
    """Exact counts plus nearest-rank length quantiles."""
    if not docs:
        raise DataError("corpus_stats requires a non-empty document list")
    lengths = sorted(len(d.text) for d in docs)
    n_pos = sum(d.label for d in docs)
    return CorpusStats(
        n_docs=len(docs),
        n_positive=n_pos,
        n_negative=len(docs) - n_pos,
        positive_rate=n_pos / len(docs),
        length_min=lengths[0],
        length_q25=_nearest_rank(lengths, 0.25),
        length_median=_nearest_rank(lengths, 0.5),
        length_q75=_nearest_rank(lengths, 0.75),
        length_max=lengths[-1],
        length_mean=sum(lengths) / len(lengths),
    )


def _load_phrases() -> dict:
    payload = files("dosescreen").joinpath("resources/synth_phrases.json").read_text("utf-8")
    return json.loads(payload)


def generate_synthetic_corpus(
    n: int,
    positive_rate: float,
    signal_strength: float,
    seed: int,
) -> list[NarrativeRecord]:
    """Deterministic synthetic corpus with floor(n * positive_rate) positives.

    Positives carry a dosing-deviation status sentence with probability
    ``signal_strength`` (compliant phrasing otherwise); negatives always get
    compliant phrasing. Every other draw — drugs, doses, routes, schedules,
    metadata, field presence — is label-independent, so at strength 0 the
    text carries no label signal at all.
    """
    if n < 10:
        raise UsageError("synthetic corpus needs n >= 10")
    if not 0.0 < positive_rate < 1.0:
        raise UsageError("positive_rate must lie strictly between 0 and 1")
    if not 0.0 <= signal_strength <= 1.0:
        raise UsageError("signal_strength must lie in [0, 1]")
    bank = _load_phrases()
    rng = random.Random(seed)
    n_pos = math.floor(n * positive_rate)
    positives = set(rng.sample(range(n), n_pos))

    records: list[NarrativeRecord] = []
    for i in range(n):
        label = 1 if i in positives else 0
        drug = rng.choice(bank["drugs"])
        condition = rng.choice(bank["conditions"])
        dose = rng.choice((5, 10, 20, 25, 50, 75, 100, 150, 200, 250, 400, 500, 800))
        unit = rng.choice(("mg", "ml", "mcg", "iu", "units"))
        route = rng.choice(bank["routes"])
        freq = rng.choice(bank["frequencies"])
        site = rng.choice(bank["sites"])
        filler = rng.choice(bank["filler"])
        compliant = rng.choice(bank["compliant"])
        deviation = rng.choice(bank["deviation"])
        # One uniform draw per record keeps stream consumption identical for
        # both classes; only its use depends on the label.
        u = rng.random()
        status = deviation if (label == 1 and u < signal_strength) else compliant

        has_keywords = rng.random() < 0.5
        has_pdf = rng.random() < 0.3
        has_location = rng.random() < 0.5
        has_intervention_desc = rng.random() < 0.8

        rec = NarrativeRecord(
            id=f"synth-{i:06d}",
            label=label,
            briefSummary=f"Randomized study of {drug} in participants with {condition}.",
            detailedDescription=(
                f"Participants receive {dose} {unit} {drug} {route} {freq}. "
                f"{status}. {filler}"
            ),
            armDescriptions=f"Arm A: {drug} {dose} {unit} {freq}. Arm B: placebo.",
            interventionNames=drug,
            conditions=condition,
            numTrials=1,
            numConditions=rng.randint(1, 3),
            enrollmentCount=rng.randrange(20, 2000),
            phaseEncoded=rng.randint(0, 4),
            studyTypeEncoded=rng.randint(0, 2),
        )
        if has_keywords:
            rec.conditionsKeywords = condition.lower()
        if has_pdf:
            rec.protocolPdfText = f"Protocol summary. {filler} Dosing is specified per arm."
        if has_location:
            rec.locationDetails = site
        if has_intervention_desc:
            rec.interventionDescriptions = f"{drug} administered {route} {freq}."
        records.append(rec)
    return records
