"""Sparse storage for partially observed matrices, masking, and disk I/O.

A value is kept for every revealed position, including exact zeros: an
observed zero carries information, unlike an unobserved hole.  Entries are
stored sorted in row-major order so downstream accumulations do not depend
on the order in which entries arrived.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Union

import numpy as np

from .errors import DegenerateInputError, DimensionMismatchError

__all__ = [
    "ProblemShape",
    "ObservedMatrix",
    "project_observed",
    "observed_frobenius",
    "read_matrix_market",
    "write_matrix_market",
]


@dataclass(frozen=True)
class ProblemShape:
    """Row and column counts of the matrix being completed."""

    m: int
    n: int

    def __post_init__(self) -> None:
        m, n = int(self.m), int(self.n)
        if m < 1 or n < 1:
            raise DimensionMismatchError(
                f"matrix dimensions must be at least 1x1, got {self.m}x{self.n}"
            )
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "n", n)

    @property
    def alpha(self) -> float:
        """Aspect ratio max(m, n) / min(m, n); always >= 1."""
        return max(self.m, self.n) / min(self.m, self.n)

    def as_tuple(self) -> tuple[int, int]:
        return (self.m, self.n)


def _as_shape(shape) -> ProblemShape:
    if isinstance(shape, ProblemShape):
        return shape
    m, n = shape
    return ProblemShape(int(m), int(n))


class ObservedMatrix:
    """Immutable set of revealed entries of an m-by-n matrix.

    Stores coordinate triplets plus per-row / per-column degree counts built
    once at construction, so degree queries are O(1) and products against the
    sparse matrix are linear in the number of entries.
    """

    __slots__ = ("_shape", "_rows", "_cols", "_values", "_keys",
                 "_row_degrees", "_col_degrees")

    def __init__(self, shape, rows, cols, values):
        shp = _as_shape(shape)
        rows = np.ascontiguousarray(rows, dtype=np.int64)
        cols = np.ascontiguousarray(cols, dtype=np.int64)
        values = np.ascontiguousarray(values, dtype=np.float64)
        if not (rows.ndim == cols.ndim == values.ndim == 1):
            raise DimensionMismatchError("rows, cols and values must be 1-d")
        if not (rows.size == cols.size == values.size):
            raise DimensionMismatchError(
                f"triplet arrays disagree in length: {rows.size}, {cols.size}, {values.size}"
            )
        if rows.size:
            if rows.min() < 0 or rows.max() >= shp.m:
                raise DimensionMismatchError("row index out of range")
            if cols.min() < 0 or cols.max() >= shp.n:
                raise DimensionMismatchError("column index out of range")
        if not np.all(np.isfinite(values)):
            raise DegenerateInputError("entry values must be finite")

        keys = rows * shp.n + cols
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        if keys.size > 1 and np.any(keys[1:] == keys[:-1]):
            dup = int(keys[1:][keys[1:] == keys[:-1]][0])
            raise DimensionMismatchError(
                f"duplicate entry at position ({dup // shp.n}, {dup % shp.n})"
            )
        self._shape = shp
        self._rows = rows[order]
        self._cols = cols[order]
        self._values = values[order]
        self._keys = keys
        self._row_degrees = np.bincount(self._rows, minlength=shp.m)
        self._col_degrees = np.bincount(self._cols, minlength=shp.n)
        for a in (self._rows, self._cols, self._values, self._keys,
                  self._row_degrees, self._col_degrees):
            a.flags.writeable = False

    @classmethod
    def from_entries(cls, shape, entries: Iterable[tuple[int, int, float]]) -> "ObservedMatrix":
        ent = list(entries)
        if ent:
            rows, cols, values = (np.asarray(x) for x in zip(*ent))
        else:
            rows = cols = values = np.empty(0)
        return cls(shape, rows, cols, values)

    # -- basic views ------------------------------------------------------

    @property
    def shape(self) -> ProblemShape:
        return self._shape

    @property
    def rows(self) -> np.ndarray:
        return self._rows

    @property
    def cols(self) -> np.ndarray:
        return self._cols

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def entry_count(self) -> int:
        return int(self._values.size)

    @property
    def epsilon(self) -> float:
        """Normalized sample size |E| / sqrt(m * n)."""
        return self.entry_count / np.sqrt(self._shape.m * self._shape.n)

    @property
    def row_degrees(self) -> np.ndarray:
        return self._row_degrees

    @property
    def col_degrees(self) -> np.ndarray:
        return self._col_degrees

    def __repr__(self) -> str:
        return (f"ObservedMatrix({self._shape.m}x{self._shape.n}, "
                f"{self.entry_count} entries)")

    # -- derived forms ----------------------------------------------------

    def with_values(self, values) -> "ObservedMatrix":
        """Same pattern, new values (skips duplicate re-checking)."""
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.shape != self._values.shape:
            raise DimensionMismatchError("value array does not match the pattern")
        out = object.__new__(ObservedMatrix)
        out._shape = self._shape
        out._rows = self._rows
        out._cols = self._cols
        out._keys = self._keys
        out._row_degrees = self._row_degrees
        out._col_degrees = self._col_degrees
        values.flags.writeable = False
        out._values = values
        return out

    def keep(self, mask: np.ndarray) -> "ObservedMatrix":
        """Subset of entries selected by a boolean mask over stored order."""
        out = object.__new__(ObservedMatrix)
        out._shape = self._shape
        out._rows = self._rows[mask]
        out._cols = self._cols[mask]
        out._values = self._values[mask]
        out._keys = self._keys[mask]
        out._row_degrees = np.bincount(out._rows, minlength=self._shape.m)
        out._col_degrees = np.bincount(out._cols, minlength=self._shape.n)
        for a in (out._rows, out._cols, out._values, out._keys,
                  out._row_degrees, out._col_degrees):
            a.flags.writeable = False
        return out

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self._shape.as_tuple())
        dense[self._rows, self._cols] = self._values
        return dense

    def lookup(self, rows, cols) -> np.ndarray:
        """Values at the given positions; unobserved positions give 0."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        keys = rows * self._shape.n + cols
        idx = np.searchsorted(self._keys, keys)
        idx = np.minimum(idx, max(self._keys.size - 1, 0))
        out = np.zeros(keys.shape)
        if self._keys.size:
            hit = self._keys[idx] == keys
            out[hit] = self._values[idx[hit]]
        return out

    # -- products (sparse matrix semantics: unobserved = 0) ---------------

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self._shape.n,):
            raise DimensionMismatchError(
                f"expected vector of length {self._shape.n}, got {x.shape}"
            )
        return np.bincount(self._rows, weights=self._values * x[self._cols],
                           minlength=self._shape.m)

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self._shape.m,):
            raise DimensionMismatchError(
                f"expected vector of length {self._shape.m}, got {y.shape}"
            )
        return np.bincount(self._cols, weights=self._values * y[self._rows],
                           minlength=self._shape.n)


def _operand_values_at(operand, rows, cols, shape: ProblemShape) -> np.ndarray:
    """Entry values of a matrix-like operand at the given positions.

    Accepts a dense array, an ObservedMatrix (holes read as 0), or any object
    exposing ``values_at(rows, cols)`` and ``shape`` (factored forms), without
    densifying the operand.
    """
    if isinstance(operand, np.ndarray):
        if operand.shape != shape.as_tuple():
            raise DimensionMismatchError(
                f"operand shape {operand.shape} != pattern shape {shape.as_tuple()}"
            )
        return np.asarray(operand[rows, cols], dtype=np.float64)
    if isinstance(operand, ObservedMatrix):
        if operand.shape != shape:
            raise DimensionMismatchError("operand shape does not match pattern shape")
        return operand.lookup(rows, cols)
    values_at = getattr(operand, "values_at", None)
    if values_at is not None:
        oshape = getattr(operand, "shape", None)
        if oshape is not None and _as_shape(oshape) != shape:
            raise DimensionMismatchError("operand shape does not match pattern shape")
        return np.asarray(values_at(rows, cols), dtype=np.float64)
    raise TypeError(f"unsupported operand type {type(operand).__name__}")


def project_observed(operand, pattern: ObservedMatrix) -> ObservedMatrix:
    """Mask a matrix to the pattern's revealed positions.

    Returns an ObservedMatrix holding the operand's values at exactly the
    pattern's positions; everything else is treated as unobserved.  Applying
    the same projection twice is the identity on the first result.
    """
    vals = _operand_values_at(operand, pattern.rows, pattern.cols, pattern.shape)
    return pattern.with_values(vals)


def observed_frobenius(a: ObservedMatrix, b) -> float:
    """Frobenius norm of (a - b) restricted to a's observed positions."""
    vals = _operand_values_at(b, a.rows, a.cols, a.shape)
    return float(np.linalg.norm(a.values - vals))


# -- MatrixMarket coordinate I/O ------------------------------------------
#
# Format: header line "%%MatrixMarket matrix coordinate real general",
# optional %-comment lines, a size line "m n nnz", then one "i j value" line
# per entry with 1-based indices.  Explicit zeros are written and read back.

_MM_HEADER = "%%MatrixMarket matrix coordinate real general"


def write_matrix_market(obs: ObservedMatrix, target: Union[str, Path, IO[str]],
                        comment: str | None = None) -> None:
    """Write the observed entries in MatrixMarket coordinate format."""
    own = isinstance(target, (str, Path))
    fh = open(target, "w") if own else target
    try:
        fh.write(_MM_HEADER + "\n")
        if comment:
            for line in comment.splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{obs.shape.m} {obs.shape.n} {obs.entry_count}\n")
        for i, j, v in zip(obs.rows, obs.cols, obs.values):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")
    finally:
        if own:
            fh.close()


def read_matrix_market(source: Union[str, Path, IO[str]]) -> ObservedMatrix:
    """Read a MatrixMarket coordinate file into an ObservedMatrix.

    Only the "matrix coordinate real/integer general" flavor is supported;
    indices on disk are 1-based.
    """
    own = isinstance(source, (str, Path))
    fh = open(source) if own else source
    try:
        header = fh.readline().strip()
        fields = header.lower().split()
        if (len(fields) < 5 or fields[0] != "%%matrixmarket"
                or fields[1] != "matrix" or fields[2] != "coordinate"
                or fields[3] not in ("real", "integer") or fields[4] != "general"):
            raise DegenerateInputError(f"unsupported MatrixMarket header: {header!r}")
        size_line = ""
        for line in fh:
            stripped = line.strip()
            if stripped and not stripped.startswith("%"):
                size_line = stripped
                break
        if not size_line:
            raise DegenerateInputError("missing size line")
        try:
            m, n, nnz = (int(t) for t in size_line.split())
        except ValueError as exc:
            raise DegenerateInputError(f"bad size line: {size_line!r}") from exc
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        values = np.empty(nnz)
        count = 0
        for line in fh:
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            parts = stripped.split()
            if len(parts) != 3:
                raise DegenerateInputError(f"bad entry line: {stripped!r}")
            if count >= nnz:
                raise DegenerateInputError("more entries than the size line declares")
            rows[count] = int(parts[0]) - 1
            cols[count] = int(parts[1]) - 1
            values[count] = float(parts[2])
            count += 1
        if count != nnz:
            raise DegenerateInputError(
                f"size line declares {nnz} entries but file holds {count}"
            )
        return ObservedMatrix((m, n), rows, cols, values)
    finally:
        if own:
            fh.close()
