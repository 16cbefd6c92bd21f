"""Sparse vectors, datasets and libsvm ingestion.

Indices are 1-based everywhere, matching the ``{1, ..., D}`` coordinate
convention used by the binning formula of one permutation hashing.
"""

from __future__ import annotations

import gzip
import io
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import DimensionError, ParseError

logger = logging.getLogger(__name__)


def _as_index_array(indices) -> np.ndarray:
    arr = np.asarray(indices, dtype=np.int64).reshape(-1)
    return arr


def _check_indices(dim: int, idx: np.ndarray) -> None:
    if dim < 1:
        raise DimensionError(f"dim must be positive, got {dim}")
    if idx.size:
        if idx[0] < 1 or idx[-1] > dim:
            raise DimensionError(f"indices must lie in [1, {dim}]")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("indices must be strictly ascending")


@dataclass(frozen=True, eq=False)
class SparseBinaryVector:
    """A vector in {0,1}^D stored as its sorted 1-based support."""

    dim: int
    indices: np.ndarray

    def __post_init__(self):
        idx = _as_index_array(self.indices)
        _check_indices(self.dim, idx)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def __eq__(self, other):
        if not isinstance(other, SparseBinaryVector):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.indices, other.indices)

    def __hash__(self):
        return hash((self.dim, self.indices.tobytes()))

    def __repr__(self):
        return f"SparseBinaryVector(dim={self.dim}, nnz={self.nnz})"

    @classmethod
    def from_dense(cls, x) -> "SparseBinaryVector":
        x = np.asarray(x)
        return cls(x.size, np.flatnonzero(x) + 1)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.uint8)
        out[self.indices - 1] = 1
        return out


@dataclass(frozen=True, eq=False)
class SparseWeightedVector:
    """A vector in R_+^D stored as sorted (index, positive weight) pairs."""

    dim: int
    indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        idx = _as_index_array(self.indices)
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if w.shape != idx.shape:
            raise ValueError("indices and weights must have the same length")
        _check_indices(self.dim, idx)
        if np.any(~(w > 0)) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and strictly positive")
        idx.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", w)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def __eq__(self, other):
        if not isinstance(other, SparseWeightedVector):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.weights, other.weights)
        )

    def __hash__(self):
        return hash((self.dim, self.indices.tobytes(), self.weights.tobytes()))

    def __repr__(self):
        return f"SparseWeightedVector(dim={self.dim}, nnz={self.nnz})"

    @classmethod
    def from_dense(cls, x) -> "SparseWeightedVector":
        x = np.asarray(x, dtype=np.float64)
        nz = np.flatnonzero(x)
        return cls(x.size, nz + 1, x[nz])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices - 1] = self.weights
        return out


Vector = Union[SparseBinaryVector, SparseWeightedVector]


@dataclass(frozen=True)
class Dataset:
    """An immutable, ordered collection of vectors sharing one dimension.

    ``ids`` are stable identifiers (the 0-based line number in the source
    file for loaded data) that survive filtering and subsampling.
    """

    dim: int
    vectors: tuple
    labels: Optional[tuple] = None
    ids: tuple = field(default=None)

    def __post_init__(self):
        vecs = tuple(self.vectors)
        object.__setattr__(self, "vectors", vecs)
        for v in vecs:
            if v.dim != self.dim:
                raise DimensionError(
                    f"vector dim {v.dim} differs from dataset dim {self.dim}"
                )
        ids = tuple(range(len(vecs))) if self.ids is None else tuple(self.ids)
        if len(ids) != len(vecs):
            raise ValueError("ids must match the number of vectors")
        object.__setattr__(self, "ids", ids)
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != len(vecs):
                raise ValueError("labels must match the number of vectors")
            object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.vectors)

    def __getitem__(self, i):
        return self.vectors[i]

    def __iter__(self):
        return iter(self.vectors)

    @property
    def is_binary(self) -> bool:
        return all(isinstance(v, SparseBinaryVector) for v in self.vectors)

    def nnz(self) -> np.ndarray:
        return np.array([v.nnz for v in self.vectors], dtype=np.int64)

    def subset(self, positions: Sequence[int]) -> "Dataset":
        """Dataset restricted to the given positions (not ids), in that order."""
        positions = list(positions)
        return Dataset(
            self.dim,
            tuple(self.vectors[p] for p in positions),
            None if self.labels is None else tuple(self.labels[p] for p in positions),
            tuple(self.ids[p] for p in positions),
        )

    def with_dim(self, dim: int) -> "Dataset":
        """Re-embed every vector in a larger ambient dimension (zero padding)."""
        if dim < self.dim:
            raise DimensionError(f"cannot shrink dim {self.dim} to {dim}")
        if dim == self.dim:
            return self
        vecs = []
        for v in self.vectors:
            if isinstance(v, SparseBinaryVector):
                vecs.append(SparseBinaryVector(dim, v.indices))
            else:
                vecs.append(SparseWeightedVector(dim, v.indices, v.weights))
        return Dataset(dim, tuple(vecs), self.labels, self.ids)


def _open_text(path):
    path = os.fspath(path)
    if path.endswith(".gz"):
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def parse_libsvm_line(line: str, line_no: int = None, path=None):
    """Parse ``<label> <idx>:<val> ...`` into (label, indices, values).

    Explicit zero values are dropped. Returns ``None`` for blank or comment
    lines.
    """
    body = line.split("#", 1)[0].strip()
    if not body:
        return None
    tokens = body.split()
    label = tokens[0]
    try:
        float(label)
    except ValueError:
        raise ParseError(f"non-numeric label {label!r}", line_no, path) from None
    idx = []
    vals = []
    prev = 0
    for tok in tokens[1:]:
        key, sep, val = tok.partition(":")
        if not sep:
            raise ParseError(f"token {tok!r} is not of the form idx:val", line_no, path)
        try:
            i = int(key)
            x = float(val)
        except ValueError:
            raise ParseError(f"non-numeric token {tok!r}", line_no, path) from None
        if i < 1:
            raise ParseError(f"index {i} < 1 (indices are 1-based)", line_no, path)
        if i <= prev:
            raise ParseError(
                f"index {i} does not strictly ascend (previous {prev})", line_no, path
            )
        if not np.isfinite(x) or x < 0:
            raise ParseError(f"value {val!r} must be finite and non-negative", line_no, path)
        prev = i
        if x != 0:
            idx.append(i)
            vals.append(x)
    return label, idx, vals


def load_libsvm(path, dim_override: Optional[int] = None) -> Dataset:
    """Load a libsvm text file (optionally ``.gz``) as weighted vectors.

    The dataset dimension is the larger of the largest observed index and
    ``dim_override``. Line order is preserved; ids are 0-based record numbers.

    Raises:
        ParseError: on any malformed line, naming its line number.
        DimensionError: if ``dim_override`` is smaller than an observed index.
    """
    if dim_override is not None and dim_override < 1:
        raise DimensionError(f"dim_override must be positive, got {dim_override}")
    labels = []
    rows = []
    max_idx = 0
    with _open_text(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            parsed = parse_libsvm_line(line, line_no, path)
            if parsed is None:
                continue
            label, idx, vals = parsed
            if idx:
                max_idx = max(max_idx, idx[-1])
            labels.append(label)
            rows.append((idx, vals))
    if dim_override is not None and dim_override < max_idx:
        raise DimensionError(
            f"dim_override={dim_override} is smaller than observed index {max_idx}"
        )
    dim = max(max_idx, dim_override or 0)
    if dim == 0:
        # Empty file without an override: keep a valid (unit) dimension.
        dim = 1
    vectors = tuple(SparseWeightedVector(dim, i, v) for i, v in rows)
    return Dataset(dim, vectors, tuple(labels))


def _fmt_value(x: float) -> str:
    return repr(float(x)) if x != int(x) else str(int(x))


def dump_libsvm(d: Dataset, path_or_buffer) -> None:
    """Write a dataset in libsvm text format (binary vectors as ``idx:1``)."""
    lines = []
    for pos, v in enumerate(d.vectors):
        label = "0" if d.labels is None else str(d.labels[pos])
        if isinstance(v, SparseBinaryVector):
            parts = [f"{i}:1" for i in v.indices]
        else:
            parts = [f"{i}:{_fmt_value(w)}" for i, w in zip(v.indices, v.weights)]
        lines.append(" ".join([label] + parts))
    text = "\n".join(lines) + ("\n" if lines else "")
    if hasattr(path_or_buffer, "write"):
        path_or_buffer.write(text)
        return
    path = os.fspath(path_or_buffer)
    if path.endswith(".gz"):
        with gzip.open(path, "wt", encoding="utf-8") as fh:
            fh.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def binarize(d: Dataset) -> Dataset:
    """Set every nonzero entry to 1; dimension, order, ids and labels are kept."""
    vecs = tuple(
        v if isinstance(v, SparseBinaryVector) else SparseBinaryVector(v.dim, v.indices)
        for v in d.vectors
    )
    return Dataset(d.dim, vecs, d.labels, d.ids)


def filter_min_nnz(d: Dataset, f_min: int) -> Dataset:
    """Keep exactly the vectors with at least ``f_min`` nonzeros."""
    if f_min < 1:
        raise ValueError(f"f_min must be >= 1, got {f_min}")
    keep = [p for p, v in enumerate(d.vectors) if v.nnz >= f_min]
    out = d.subset(keep)
    if len(d):
        logger.info(
            "filter_min_nnz(f_min=%d): kept %d/%d (%.2f%%)",
            f_min, len(out), len(d), 100.0 * len(out) / len(d),
        )
    return out


def retained_fraction(before: Dataset, after: Dataset) -> float:
    return len(after) / len(before) if len(before) else 1.0


def pad_to_multiple(d: Dataset, K: int) -> Dataset:
    """Zero-pad the dimension up to the next multiple of ``K``."""
    return d.with_dim(-(-d.dim // K) * K)


def jaccard(u: SparseBinaryVector, v: SparseBinaryVector) -> float:
    """Binary Jaccard similarity by sorted-intersection counting."""
    a, b = u.indices, v.indices
    i = j = inter = 0
    while i < a.size and j < b.size:
        if a[i] == b[j]:
            inter += 1
            i += 1
            j += 1
        elif a[i] < b[j]:
            i += 1
        else:
            j += 1
    union = a.size + b.size - inter
    return inter / union if union else 0.0


def weighted_jaccard(u: SparseWeightedVector, v: SparseWeightedVector) -> float:
    x, y = u.to_dense(), v.to_dense()
    den = np.maximum(x, y).sum()
    return float(np.minimum(x, y).sum() / den) if den > 0 else 0.0


def from_rows(dim: int, rows: Iterable[Iterable[int]], binary: bool = True) -> Dataset:
    """Convenience constructor from lists of 1-based support indices."""
    rows = [sorted(r) for r in rows]
    if binary:
        vecs = tuple(SparseBinaryVector(dim, r) for r in rows)
    else:
        vecs = tuple(SparseWeightedVector(dim, r, np.ones(len(r))) for r in rows)
    return Dataset(dim, vecs)
