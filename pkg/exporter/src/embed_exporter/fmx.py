"""FMX1 feature-block writer.

The screening pipeline ingests dense feature blocks as FMX1 files, a
small CSR container:

    magic   4 bytes  b"FMX1"
    version u32      currently 1
    n_rows  u64
    n_cols  u64
    nnz     u64
    row_ptr u64 * (n_rows + 1)
    col_idx u32 * nnz
    values  f32 * nnz

All integers little-endian; exact zeros are dropped rather than stored.
Column names travel in a JSON sidecar next to the matrix file
(``<name>.registry.json``). This module re-implements the writer from
the format description so the exporter stays importable on its own; the
cross-package loader round-trip is covered by the acceptance suite.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

FMX_MAGIC = b"FMX1"
FMX_VERSION = 1
REGISTRY_SCHEMA_VERSION = 1


def registry_sidecar_path(path: str | Path) -> Path:
    """``emb.fmx`` -> ``emb.registry.json`` (same directory)."""
    p = Path(path)
    stem = p.name[: -len(".fmx")] if p.name.endswith(".fmx") else p.name
    return p.with_name(stem + ".registry.json")


def write_block(
    path: str | Path,
    dense: np.ndarray,
    names: list[str],
    category: str,
) -> dict:
    """Write one dense block as FMX1 plus its registry sidecar.

    Returns a small summary dict (rows, cols, nnz) for reporting. Rows
    are written in the order given; callers own corpus alignment.
    """
    dense = np.asarray(dense, dtype=np.float64)
    if dense.ndim != 2:
        raise DataError("feature block must be 2-dimensional")
    n_rows, n_cols = dense.shape
    if len(names) != n_cols:
        raise DataError(f"{len(names)} column names for {n_cols} columns")
    if not np.all(np.isfinite(dense)):
        raise DataError("feature block contains non-finite values")

    # float32 is the wire precision; drop values that round to zero so the
    # stored nnz matches what a reader will actually see.
    as_f32 = dense.astype(np.float32)
    mask = as_f32 != 0.0
    row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(mask.sum(axis=1), out=row_ptr[1:])
    rr, cc = np.nonzero(mask)
    values = as_f32[rr, cc]

    p = Path(path)
    with open(p, "wb") as f:
        f.write(FMX_MAGIC)
        f.write(struct.pack("<I", FMX_VERSION))
        f.write(struct.pack("<QQQ", n_rows, n_cols, int(values.shape[0])))
        f.write(row_ptr.astype("<u8").tobytes())
        f.write(cc.astype("<u4").tobytes())
        f.write(values.astype("<f4").tobytes())

    registry = {
        "schema_version": REGISTRY_SCHEMA_VERSION,
        "entries": [
            {"index": i, "name": name, "category": category}
            for i, name in enumerate(names)
        ],
    }
    registry_sidecar_path(p).write_text(
        json.dumps(registry, separators=(",", ":")) + "\n", encoding="utf-8"
    )
    return {"rows": n_rows, "cols": n_cols, "nnz": int(values.shape[0])}
