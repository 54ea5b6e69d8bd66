"""Trial-record JSONL reading and document assembly.

This tool runs downstream of the screening pipeline and must assemble
exactly the same document text from a corpus file: the nine registry
text fields, joined with a single space, in the declared order, skipping
absent, null, empty, and whitespace-only values while keeping the kept
values verbatim. The join rule is pinned by the shared fixture
``tests/fixtures/concat_cases.json`` at the repository root, which both
test suites replay against their own implementation.

Only the record id and the text fields are interpreted here. Labels,
registry metadata, and any future keys pass through unread, so corpora
keep working as the upstream schema grows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError

#: Join order for document text, identical to the upstream JSONL key order.
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


@dataclass
class Document:
    """One corpus row reduced to what the exporter needs."""

    id: str
    text: str


def join_text_fields(obj: dict) -> str:
    """Single-space join of present, non-blank text fields in declared order.

    A JSON null counts as absent; whitespace-only values are skipped; the
    values that remain are joined verbatim, inner whitespace and all.
    """
    parts = []
    for name in TEXT_FIELDS:
        value = obj.get(name)
        if value is None:
            continue
        if not isinstance(value, str):
            raise DataError(f"field {name!r} must be a string or null")
        if value.strip():
            parts.append(value)
    return " ".join(parts)


def load_documents(path: str | Path) -> list[Document]:
    """Read a corpus JSONL into documents, preserving file order.

    Every line must be a JSON object with a non-empty string ``id``;
    duplicate ids are rejected because downstream blocks are joined to
    the corpus by row position and a duplicated id usually means two
    files were concatenated by accident.
    """
    docs: list[Document] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"line {line_no}: malformed JSON ({e.msg})") from e
            if not isinstance(obj, dict):
                raise DataError(f"line {line_no}: record must be a JSON object")
            rec_id = obj.get("id")
            if not isinstance(rec_id, str) or not rec_id:
                raise DataError(f"line {line_no}: 'id' must be a non-empty string")
            if rec_id in seen:
                raise DataError(f"line {line_no}: duplicate id {rec_id!r}")
            seen.add(rec_id)
            try:
                text = join_text_fields(obj)
            except DataError as e:
                raise DataError(f"line {line_no}: {e}") from e
            docs.append(Document(id=rec_id, text=text))
    return docs
