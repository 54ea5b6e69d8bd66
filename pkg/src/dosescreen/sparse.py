"""CSR sparse matrices, the named-column feature registry, and FMX1 file IO.

FMX1 is the on-disk interchange format for feature matrices:

    magic   4 bytes  b"FMX1"
    version u32      currently 1
    n_rows  u64
    n_cols  u64
    nnz     u64
    row_ptr u64 * (n_rows + 1)
    col_idx u32 * nnz
    values  f32 * nnz

All integers little-endian. The column registry travels in a JSON sidecar
next to the matrix file (``<name>.registry.json``), so the binary payload
stays language-neutral and bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

FMX_MAGIC = b"FMX1"
FMX_VERSION = 1
REGISTRY_SCHEMA_VERSION = 1

CATEGORIES = ("medical", "word", "char", "embedding", "transformer_score")


class MatrixFormatError(DataError):
    """FMX1 payload violates the format contract."""


class BadMagicError(MatrixFormatError):
    pass


class VersionMismatchError(MatrixFormatError):
    pass


class TruncatedFileError(MatrixFormatError):
    pass


@dataclass
class SparseMatrix:
    """CSR matrix with float32 values.

    Invariants (checked by :meth:`validate`): ``row_ptr`` is non-decreasing
    with ``row_ptr[0] == 0`` and ``row_ptr[-1] == nnz``; column indices are
    strictly increasing within each row; no explicit zeros are stored.
    """

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    @classmethod
    def from_rows(cls, rows: list[dict[int, float]], n_cols: int) -> "SparseMatrix":
        """Build from per-row {column: value} dicts, dropping exact zeros."""
        row_ptr = np.zeros(len(rows) + 1, dtype=np.int64)
        cols: list[np.ndarray] = []
        vals: list[np.ndarray] = []
        for i, row in enumerate(rows):
            items = sorted((c, v) for c, v in row.items() if v != 0.0)
            row_ptr[i + 1] = row_ptr[i] + len(items)
            if items:
                cols.append(np.array([c for c, _ in items], dtype=np.int64))
                vals.append(np.array([v for _, v in items], dtype=np.float32))
        col_idx = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
        values = np.concatenate(vals) if vals else np.zeros(0, dtype=np.float32)
        m = cls(len(rows), n_cols, row_ptr, col_idx, values)
        m.validate()
        return m

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "SparseMatrix":
        """Sparsify a dense 2-D array by dropping exact zeros."""
        dense = np.asarray(dense)
        if dense.ndim != 2:
            raise DataError("dense block must be 2-dimensional")
        n_rows, n_cols = dense.shape
        mask = dense != 0.0
        counts = mask.sum(axis=1)
        row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(counts, out=row_ptr[1:])
        rr, cc = np.nonzero(mask)
        return cls(
            n_rows,
            n_cols,
            row_ptr,
            cc.astype(np.int64),
            dense[rr, cc].astype(np.float32),
        )

    def validate(self) -> None:
        if self.row_ptr.shape[0] != self.n_rows + 1:
            raise DataError("row_ptr length must be n_rows + 1")
        if self.row_ptr[0] != 0 or self.row_ptr[-1] != self.nnz:
            raise DataError("row_ptr endpoints inconsistent with nnz")
        if np.any(np.diff(self.row_ptr) < 0):
            raise DataError("row_ptr must be non-decreasing")
        if self.nnz:
            if int(self.col_idx.min()) < 0 or int(self.col_idx.max()) >= self.n_cols:
                raise DataError("column index out of range")
            for i in range(self.n_rows):
                lo, hi = int(self.row_ptr[i]), int(self.row_ptr[i + 1])
                if hi - lo > 1 and np.any(np.diff(self.col_idx[lo:hi]) <= 0):
                    raise DataError(f"row {i}: column indices not strictly increasing")

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = int(self.row_ptr[i]), int(self.row_ptr[i + 1])
        return self.col_idx[lo:hi], self.values[lo:hi]

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols), dtype=np.float64)
        rr = np.repeat(np.arange(self.n_rows), np.diff(self.row_ptr))
        out[rr, self.col_idx] = self.values.astype(np.float64)
        return out

    def dense_block(self, start: int, stop: int) -> np.ndarray:
        """Densify rows [start, stop) as float64, for row-wise model traversal."""
        stop = min(stop, self.n_rows)
        m = stop - start
        out = np.zeros((m, self.n_cols), dtype=np.float64)
        lo, hi = int(self.row_ptr[start]), int(self.row_ptr[stop])
        lens = np.diff(self.row_ptr[start : stop + 1])
        rr = np.repeat(np.arange(m), lens)
        out[rr, self.col_idx[lo:hi]] = self.values[lo:hi].astype(np.float64)
        return out

    def select_rows(self, indices: np.ndarray) -> "SparseMatrix":
        """Gather rows in the given order."""
        indices = np.asarray(indices, dtype=np.int64)
        lens = (self.row_ptr[indices + 1] - self.row_ptr[indices]).astype(np.int64)
        row_ptr = np.zeros(indices.shape[0] + 1, dtype=np.int64)
        np.cumsum(lens, out=row_ptr[1:])
        col_idx = np.zeros(int(row_ptr[-1]), dtype=np.int64)
        values = np.zeros(int(row_ptr[-1]), dtype=np.float32)
        for k, i in enumerate(indices):
            lo, hi = int(self.row_ptr[i]), int(self.row_ptr[i + 1])
            col_idx[row_ptr[k] : row_ptr[k + 1]] = self.col_idx[lo:hi]
            values[row_ptr[k] : row_ptr[k + 1]] = self.values[lo:hi]
        return SparseMatrix(indices.shape[0], self.n_cols, row_ptr, col_idx, values)

    def select_cols(self, columns: np.ndarray) -> "SparseMatrix":
        """Keep the given columns (ascending order required), renumbered 0..len-1."""
        columns = np.asarray(columns, dtype=np.int64)
        if columns.size and np.any(np.diff(columns) <= 0):
            raise DataError("select_cols requires strictly increasing column list")
        keep = np.zeros(self.n_cols, dtype=bool)
        keep[columns] = True
        remap = np.full(self.n_cols, -1, dtype=np.int64)
        remap[columns] = np.arange(columns.shape[0])
        mask = keep[self.col_idx] if self.nnz else np.zeros(0, dtype=bool)
        rr = np.repeat(np.arange(self.n_rows), np.diff(self.row_ptr))
        rr = rr[mask]
        row_ptr = np.zeros(self.n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rr, minlength=self.n_rows), out=row_ptr[1:])
        return SparseMatrix(
            self.n_rows,
            int(columns.shape[0]),
            row_ptr,
            remap[self.col_idx[mask]],
            self.values[mask],
        )

    def equals(self, other: "SparseMatrix") -> bool:
        return (
            self.n_rows == other.n_rows
            and self.n_cols == other.n_cols
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
            and np.array_equal(self.values, other.values)
        )


@dataclass
class FeatureRegistry:
    """Ordered (column, name, category) records covering every matrix column."""

    names: list[str] = field(default_factory=list)
    categories: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.names)

    def append_block(self, names: list[str], category: str) -> None:
        if category not in CATEGORIES:
            raise DataError(f"unknown feature category: {category!r}")
        self.names.extend(names)
        self.categories.extend([category] * len(names))

    def columns_of(self, category: str) -> np.ndarray:
        return np.array(
            [i for i, c in enumerate(self.categories) if c == category],
            dtype=np.int64,
        )

    def category_widths(self) -> dict[str, int]:
        widths: dict[str, int] = {}
        for c in self.categories:
            widths[c] = widths.get(c, 0) + 1
        return widths

    def category_order(self) -> list[str]:
        return list(self.category_widths().keys())

    def validate(self, n_cols: int) -> None:
        if len(self.names) != n_cols or len(self.categories) != n_cols:
            raise DataError("registry length does not match column count")
        seen: list[str] = []
        for c in self.categories:
            if not seen or seen[-1] != c:
                if c in seen:
                    raise DataError(f"category {c!r} is not contiguous")
                seen.append(c)

    def to_json(self) -> dict:
        return {
            "schema_version": REGISTRY_SCHEMA_VERSION,
            "entries": [
                {"index": i, "name": n, "category": c}
                for i, (n, c) in enumerate(zip(self.names, self.categories))
            ],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "FeatureRegistry":
        if payload.get("schema_version") != REGISTRY_SCHEMA_VERSION:
            raise DataError("unsupported registry schema version")
        entries = payload["entries"]
        reg = cls()
        for i, e in enumerate(entries):
            if e["index"] != i:
                raise DataError("registry entries out of order")
            reg.names.append(e["name"])
            reg.categories.append(e["category"])
        return reg


def registry_sidecar_path(path: str | Path) -> Path:
    """``features.fmx`` -> ``features.registry.json`` (same directory)."""
    p = Path(path)
    stem = p.name[: -len(".fmx")] if p.name.endswith(".fmx") else p.name
    return p.with_name(stem + ".registry.json")


def save_matrix(
    path: str | Path,
    matrix: SparseMatrix,
    registry: FeatureRegistry | None = None,
) -> None:
    """Write an FMX1 file; write the registry sidecar when one is given."""
    matrix.validate()
    if registry is not None:
        registry.validate(matrix.n_cols)
    p = Path(path)
    with open(p, "wb") as f:
        f.write(FMX_MAGIC)
        f.write(struct.pack("<I", FMX_VERSION))
        f.write(struct.pack("<QQQ", matrix.n_rows, matrix.n_cols, matrix.nnz))
        f.write(matrix.row_ptr.astype("<u8").tobytes())
        f.write(matrix.col_idx.astype("<u4").tobytes())
        f.write(matrix.values.astype("<f4").tobytes())
    if registry is not None:
        registry_sidecar_path(p).write_text(
            json.dumps(registry.to_json(), separators=(",", ":")) + "\n",
            encoding="utf-8",
        )


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFileError(f"unexpected end of file while reading {what}")
    return buf


def load_matrix(path: str | Path) -> tuple[SparseMatrix, FeatureRegistry | None]:
    """Read an FMX1 file plus its registry sidecar if present."""
    p = Path(path)
    with open(p, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != FMX_MAGIC:
            raise BadMagicError(f"{p}: not an FMX1 file (magic {magic!r})")
        (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
        if version != FMX_VERSION:
            raise VersionMismatchError(
                f"{p}: FMX version {version} unsupported (expected {FMX_VERSION})"
            )
        n_rows, n_cols, nnz = struct.unpack("<QQQ", _read_exact(f, 24, "header"))
        row_ptr = np.frombuffer(
            _read_exact(f, 8 * (n_rows + 1), "row_ptr"), dtype="<u8"
        ).astype(np.int64)
        col_idx = np.frombuffer(
            _read_exact(f, 4 * nnz, "col_idx"), dtype="<u4"
        ).astype(np.int64)
        values = np.frombuffer(
            _read_exact(f, 4 * nnz, "values"), dtype="<f4"
        ).astype(np.float32)
    matrix = SparseMatrix(int(n_rows), int(n_cols), row_ptr, col_idx, values)
    matrix.validate()
    sidecar = registry_sidecar_path(p)
    registry = None
    if sidecar.exists():
        registry = FeatureRegistry.from_json(json.loads(sidecar.read_text("utf-8")))
        registry.validate(matrix.n_cols)
    return matrix, registry
