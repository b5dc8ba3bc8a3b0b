"""Embedding vectors, offsets between them, and the on-disk cache format.

Conventions used throughout the package:

* storage is float32, arithmetic that aggregates (means, dot products,
  norms) runs in float64 and is cast back at the boundary;
* an "offset" is always ``target - source``, i.e. the displacement that
  carries the source point onto the target point;
* vectors with norm below ``ZERO_NORM_THRESHOLD`` are treated as zero and
  rejected wherever a direction is required.

The cache file format is deliberately dumb: a four-byte magic, the row
dimension, the row count, then raw little-endian float32 rows, with a
companion CSV manifest mapping row index to label and source path.
Round-tripping a cache through store/load is bit-exact.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadMagicError,
    DimMismatchError,
    EmptySetError,
    LengthMismatchError,
    ManifestMismatchError,
    ShapeMismatchError,
    TruncatedFileError,
    ZeroNormError,
)
from .fileio import atomic_write_bytes

DTYPE = np.float32
ZERO_NORM_THRESHOLD = 1e-12

CACHE_MAGIC = b"AIR1"
_CACHE_HEADER = struct.Struct("<4sIQ")  # magic, dim (u32), count (u64)


def _as_float32_vector(values, *, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=DTYPE)
    if arr.ndim != 1:
        raise ShapeMismatchError(f"{what} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeMismatchError(f"{what} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ShapeMismatchError(f"{what} contains non-finite values")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EmbeddingVector:
    """A point in the shared encoder space. Immutable, float32, finite."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_float32_vector(self.values, what="embedding"))

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class OffsetVector:
    """A displacement between two points in encoder space (may be zero).

    from_id/to_id are opaque endpoint names ("source", "anchor_3", ...) kept
    purely for reporting; they never enter the math.
    """

    values: np.ndarray
    from_id: str = ""
    to_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", _as_float32_vector(self.values, what="offset"))

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class OffsetBatch:
    """A batch of same-dimension offsets, one per latent sample."""

    offsets: tuple[OffsetVector, ...]

    def __post_init__(self):
        if len(self.offsets) == 0:
            raise EmptySetError("offset batch must contain at least one offset")
        dims = {o.dim for o in self.offsets}
        if len(dims) != 1:
            raise DimMismatchError(f"offset batch mixes dimensions {sorted(dims)}")

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "OffsetBatch":
        matrix = np.asarray(matrix, dtype=DTYPE)
        if matrix.ndim != 2:
            raise ShapeMismatchError(f"offset matrix must be 2-D, got shape {matrix.shape}")
        return cls(tuple(OffsetVector(row) for row in matrix))

    @property
    def matrix(self) -> np.ndarray:
        """(batch, dim) float32 view of the offsets."""
        return np.stack([o.values for o in self.offsets])

    @property
    def dim(self) -> int:
        return self.offsets[0].dim

    def __len__(self) -> int:
        return len(self.offsets)


def vector_values(v) -> np.ndarray:
    """Accept EmbeddingVector, OffsetVector or a raw 1-D array-like.

    Raw arrays keep their dtype: quantizing a float64 input to storage
    precision would poison every downstream float64 accumulation.
    """
    if isinstance(v, (EmbeddingVector, OffsetVector)):
        return v.values
    return np.asarray(v)


def norm(v) -> float:
    return float(np.linalg.norm(vector_values(v).astype(np.float64)))


def normalize(v):
    """Scale to unit norm, preserving the wrapper type of the input."""
    values = vector_values(v)
    n = float(np.linalg.norm(values.astype(np.float64)))
    if n < ZERO_NORM_THRESHOLD:
        raise ZeroNormError(f"cannot normalize vector with norm {n!r}")
    result = (values.astype(np.float64) / n).astype(DTYPE)
    if isinstance(v, EmbeddingVector):
        return EmbeddingVector(result)
    if isinstance(v, OffsetVector):
        return OffsetVector(result)
    return result


def cosine_similarity(a, b) -> float:
    """cos(a, b) = a.b / (|a| |b|), accumulated in float64."""
    va = vector_values(a).astype(np.float64)
    vb = vector_values(b).astype(np.float64)
    if va.shape != vb.shape:
        raise DimMismatchError(f"cosine operands have dims {va.shape[0]} and {vb.shape[0]}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na < ZERO_NORM_THRESHOLD or nb < ZERO_NORM_THRESHOLD:
        raise ZeroNormError(f"cosine undefined for norms {na!r}, {nb!r}")
    return float(np.dot(va, vb) / (na * nb))


def offset(source, target, from_id: str = "", to_id: str = "") -> OffsetVector:
    """Displacement from ``source`` to ``target`` (target minus source)."""
    vs = vector_values(source)
    vt = vector_values(target)
    if vs.shape != vt.shape:
        raise DimMismatchError(f"offset operands have dims {vs.shape[0]} and {vt.shape[0]}")
    return OffsetVector(vt.astype(np.float64) - vs.astype(np.float64), from_id, to_id)


def mean_embedding(vectors: Iterable) -> EmbeddingVector:
    """Coordinate-wise arithmetic mean, accumulated in float64."""
    rows = [vector_values(v).astype(np.float64) for v in vectors]
    if not rows:
        raise EmptySetError("mean of an empty embedding set is undefined")
    dims = {r.shape[0] for r in rows}
    if len(dims) != 1:
        raise DimMismatchError(f"mean over mixed dimensions {sorted(dims)}")
    return EmbeddingVector(np.mean(np.stack(rows), axis=0))


def mean_rows(matrix: np.ndarray) -> np.ndarray:
    """Float64 mean over the rows of an (n, d) array; float64 result."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise EmptySetError(f"row mean needs a non-empty 2-D array, got shape {matrix.shape}")
    return matrix.astype(np.float64).mean(axis=0)


def batch_offsets(source: Sequence, target: Sequence) -> OffsetBatch:
    """Pairwise offsets from source embeddings to target embeddings."""
    if len(source) != len(target):
        raise LengthMismatchError(f"batch sizes differ: {len(source)} vs {len(target)}")
    return OffsetBatch(tuple(offset(s, t) for s, t in zip(source, target)))


# ---------------------------------------------------------------------------
# on-disk cache


@dataclass(frozen=True)
class EmbeddingCache:
    """Rows of encoder output plus per-row label and source path."""

    embeddings: np.ndarray
    labels: tuple[str, ...] = field(default_factory=tuple)
    source_paths: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=DTYPE)
        if emb.ndim != 2:
            raise ShapeMismatchError(f"cache embeddings must be 2-D, got shape {emb.shape}")
        if not np.all(np.isfinite(emb)):
            raise ShapeMismatchError("cache embeddings contain non-finite values")
        emb = emb.copy()
        emb.setflags(write=False)
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
        object.__setattr__(self, "source_paths", tuple(str(x) for x in self.source_paths))
        n = emb.shape[0]
        if len(self.labels) != n or len(self.source_paths) != n:
            raise LengthMismatchError(
                f"cache has {n} rows but {len(self.labels)} labels / "
                f"{len(self.source_paths)} source paths"
            )

    @property
    def count(self) -> int:
        return int(self.embeddings.shape[0])

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])

    def rows_for_label(self, label: str) -> np.ndarray:
        mask = np.array([lab == label for lab in self.labels], dtype=bool)
        return self.embeddings[mask]

    def class_labels(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for lab in self.labels:
            seen.setdefault(lab, None)
        return tuple(sorted(seen))


def manifest_path_for(path: str | Path) -> Path:
    return Path(str(path) + ".manifest.csv")


def cache_store(cache: EmbeddingCache, path: str | Path) -> None:
    """Write the binary cache and its companion manifest CSV atomically."""
    path = Path(path)
    header = _CACHE_HEADER.pack(CACHE_MAGIC, cache.dim, cache.count)
    payload = np.ascontiguousarray(cache.embeddings, dtype="<f4").tobytes()
    atomic_write_bytes(path, header + payload)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["index", "label", "source_path"])
    for i, (label, src) in enumerate(zip(cache.labels, cache.source_paths)):
        writer.writerow([i, label, src])
    atomic_write_bytes(manifest_path_for(path), buf.getvalue().encode("utf-8"))


def cache_load(path: str | Path) -> EmbeddingCache:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _CACHE_HEADER.size or raw[:4] != CACHE_MAGIC:
        raise BadMagicError(f"{path} does not start with the {CACHE_MAGIC!r} magic")
    magic, dim, count = _CACHE_HEADER.unpack_from(raw)
    expected = _CACHE_HEADER.size + 4 * dim * count
    if len(raw) < expected:
        raise TruncatedFileError(
            f"{path} declares {count} rows of dim {dim} "
            f"({expected} bytes) but holds {len(raw)}"
        )
    flat = np.frombuffer(raw, dtype="<f4", count=dim * count, offset=_CACHE_HEADER.size)
    embeddings = flat.reshape(count, dim) if count else np.zeros((0, dim), dtype=DTYPE)

    mpath = manifest_path_for(path)
    with open(mpath, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows or rows[0] != ["index", "label", "source_path"]:
        raise ManifestMismatchError(f"{mpath} is missing the manifest header")
    body = rows[1:]
    if len(body) != count:
        raise ManifestMismatchError(
            f"{path} holds {count} rows but manifest lists {len(body)}"
        )
    labels = tuple(r[1] for r in body)
    paths = tuple(r[2] for r in body)
    return EmbeddingCache(embeddings=embeddings, labels=labels, source_paths=paths)
