import json
import struct
from pathlib import Path

import numpy as np
import pytest

#: Shared with the screening pipeline's suite: both implementations of the
#: nine-field join must reproduce these cases byte for byte.
CONCAT_FIXTURE = (
    Path(__file__).resolve().parent.parent.parent / "tests" / "fixtures" / "concat_cases.json"
)


@pytest.fixture(scope="session")
def concat_cases():
    with open(CONCAT_FIXTURE, "r", encoding="utf-8") as f:
        return json.load(f)


@pytest.fixture
def write_corpus(tmp_path):
    """Factory: write record dicts as corpus JSONL, return the path."""

    def _write(rows, name="corpus.jsonl"):
        path = tmp_path / name
        with open(path, "w", encoding="utf-8") as f:
            for row in rows:
                f.write(json.dumps(row, ensure_ascii=False) + "\n")
        return path

    return _write


def read_fmx_bytes(path):
    """Parse an FMX1 file directly from its byte layout.

    Deliberately independent of the writer (and of the screening
    pipeline's loader): header fields are unpacked with struct and the
    arrays sliced by the documented offsets, so any layout drift fails
    here even if writer and reader drifted together.
    """
    raw = Path(path).read_bytes()
    assert raw[:4] == b"FMX1"
    (version,) = struct.unpack_from("<I", raw, 4)
    assert version == 1
    n_rows, n_cols, nnz = struct.unpack_from("<QQQ", raw, 8)
    off = 32
    row_ptr = np.frombuffer(raw, dtype="<u8", count=n_rows + 1, offset=off)
    off += 8 * (n_rows + 1)
    col_idx = np.frombuffer(raw, dtype="<u4", count=nnz, offset=off)
    off += 4 * nnz
    values = np.frombuffer(raw, dtype="<f4", count=nnz, offset=off)
    assert off + 4 * nnz == len(raw), "trailing bytes after the values array"
    return n_rows, n_cols, row_ptr, col_idx, values


def read_fmx_dense(path):
    """Densify an FMX1 file via the byte-level parse above."""
    n_rows, n_cols, row_ptr, col_idx, values = read_fmx_bytes(path)
    out = np.zeros((n_rows, n_cols), dtype=np.float64)
    for i in range(n_rows):
        lo, hi = int(row_ptr[i]), int(row_ptr[i + 1])
        out[i, col_idx[lo:hi]] = values[lo:hi]
    return out


@pytest.fixture(scope="session")
def tiny_checkpoint_dir(tmp_path_factory):
    """A tiny random-weight sequence classifier saved to a local directory.

    Built offline so the pretrained-backend code paths can run without a
    model hub: a 16-token WordPiece vocabulary and a 2-layer, 32-wide
    BERT with a 2-label head. Weights are seeded, so scores are stable
    within a session.
    """
    torch = pytest.importorskip("torch")
    transformers = pytest.importorskip("transformers")

    d = tmp_path_factory.mktemp("tiny-classifier")
    vocab = [
        "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
        "dose", "mg", "daily", "patient", "twice", "was", "given",
        "the", "a", "##s", "##ing",
    ]
    (d / "vocab.txt").write_text("\n".join(vocab), encoding="utf-8")
    tokenizer = transformers.BertTokenizer(str(d / "vocab.txt"), model_max_length=64)
    torch.manual_seed(0)
    config = transformers.BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=64,
        num_labels=2,
    )
    model = transformers.BertForSequenceClassification(config)
    model.save_pretrained(d)
    tokenizer.save_pretrained(d)
    return str(d)
