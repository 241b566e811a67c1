"""Vector kernel shared by every other module.

Embeddings are plain float64 numpy arrays of a fixed per-run dimension.
Validation happens at ingestion; the hot-path kernels only check what their
contracts require (matching dimensions, nonzero norms for cosine).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

Embedding = np.ndarray


class EmbeddingError(ValueError):
    """Base class for vector-kernel errors."""


class DimensionMismatchError(EmbeddingError):
    """Operands have different dimensions (structural error)."""


class DegenerateEmbeddingError(EmbeddingError):
    """Zero-norm, empty, or non-finite input (data error, rejected outright)."""


def as_embedding(values: Iterable[float], dim: int | None = None) -> Embedding:
    """Validate and convert raw values into a float64 embedding.

    Rejects non-1D input, non-finite components, zero-norm vectors, and
    (when `dim` is given) dimension mismatches. Inputs arriving as 32-bit
    floats are widened; downstream mean/centroid accumulation assumes 64-bit.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DegenerateEmbeddingError(f"embedding must be a nonempty 1D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateEmbeddingError("embedding has NaN/Inf components")
    if not np.any(arr):
        raise DegenerateEmbeddingError("zero-norm embedding rejected at ingestion")
    if dim is not None and arr.size != dim:
        raise DimensionMismatchError(f"expected dim {dim}, got {arr.size}")
    return arr


def _check_dims(a: Embedding, b: Embedding) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape} vs {b.shape}")


def cosine_similarity(a: Embedding, b: Embedding) -> float:
    """Cosine of the angle between a and b, clamped into [-1, 1].

    Zero-norm input is a domain error: it signals a degenerate user or
    document embedding that should have been rejected at ingestion.
    """
    _check_dims(a, b)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise DegenerateEmbeddingError("cosine similarity undefined for zero-norm vector")
    value = float(np.dot(a, b)) / (na * nb)
    return max(-1.0, min(1.0, value))


def euclidean_distance(a: Embedding, b: Embedding) -> float:
    """L2 norm of (a - b)."""
    _check_dims(a, b)
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))


def mean_embedding(vectors: Sequence[Embedding]) -> Embedding:
    """Componentwise arithmetic mean of a nonempty sequence of embeddings."""
    if len(vectors) == 0:
        raise DegenerateEmbeddingError("mean of zero embeddings (user with no training documents)")
    first = np.asarray(vectors[0], dtype=np.float64)
    for v in vectors[1:]:
        _check_dims(first, np.asarray(v))
    return np.mean(np.asarray(vectors, dtype=np.float64), axis=0)


def unit(v: Embedding) -> Embedding:
    """v scaled to unit L2 norm."""
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise DegenerateEmbeddingError("cannot normalize zero-norm vector")
    return np.asarray(v, dtype=np.float64) / n


class UnitIndex:
    """Row-normalized matrix over labeled vectors for fast cosine lookups.

    Cosine similarity between unit rows reduces to a dot product, so batch
    scoring against a subset of labels is a single small matmul.
    """

    def __init__(self, ids: Sequence[str], vectors: Sequence[Embedding]):
        if len(ids) != len(vectors):
            raise ValueError("ids and vectors must align")
        self.ids = list(ids)
        self.index = {uid: i for i, uid in enumerate(self.ids)}
        mat = np.asarray(vectors, dtype=np.float64)
        norms = np.linalg.norm(mat, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise DegenerateEmbeddingError("zero-norm vector in index")
        self.matrix = mat / norms

    def __len__(self) -> int:
        return len(self.ids)

    def sims(self, query: Embedding, labels: Sequence[str]) -> np.ndarray:
        """Cosine similarity of `query` against each labeled row, in order."""
        q = unit(np.asarray(query, dtype=np.float64))
        rows = self.matrix[[self.index[x] for x in labels]]
        return rows @ q

    def pair(self, a: str, b: str) -> float:
        return float(self.matrix[self.index[a]] @ self.matrix[self.index[b]])
