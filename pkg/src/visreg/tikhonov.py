"""Sparse Tikhonov matrix for the squared visualization loss.

For slabs ``w`` flattened slab-major then row-major, ``build_gamma`` returns a
matrix with ``||Gamma @ flatten(w)||**2 == vl_model(w, K, norm=2)``. Row
``(s, i, j)`` holds the coefficients of output pixel ``(i, j)`` of slab ``s``;
its nonzeros sit at the in-bounds pixels ``(i, j) + r`` with value ``a_r``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .conv_core import RelKernel
from .visloss import VRWeights


@dataclass(frozen=True, eq=False)
class SparseMat:
    """Compressed-row storage with sorted, unique columns per row."""

    n_rows: int
    n_cols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        if len(self.indptr) != self.n_rows + 1 or self.indptr[0] != 0:
            raise ValueError("indptr must have n_rows + 1 entries starting at 0")
        if self.indptr[-1] != len(self.indices) or len(self.indices) != len(self.data):
            raise ValueError("indptr, indices and data lengths disagree")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= self.n_cols):
            raise ValueError("column index out of bounds")
        if np.any(self.data == 0):
            raise ValueError("explicit zero coefficients are not stored")
        same_row = np.diff(self._row_of_entry()) == 0
        if np.any(np.diff(self.indices)[same_row] <= 0):
            raise ValueError("columns must be strictly increasing within a row")

    def __eq__(self, other):
        if not isinstance(other, SparseMat):
            return NotImplemented
        return ((self.n_rows, self.n_cols) == (other.n_rows, other.n_cols)
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.data, other.data))

    __hash__ = None

    @classmethod
    def from_triplets(cls, n_rows, n_cols, rows, cols, vals) -> "SparseMat":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        keep = vals != 0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
        return cls(n_rows, n_cols, indptr, cols, vals)

    def _row_of_entry(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_rows), np.diff(self.indptr))

    @property
    def nnz(self) -> int:
        return len(self.data)

    def row(self, i: int) -> list[tuple[int, float]]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return [(int(c), float(v)) for c, v in zip(self.indices[lo:hi], self.data[lo:hi])]

    @property
    def rows(self) -> list[list[tuple[int, float]]]:
        return [self.row(i) for i in range(self.n_rows)]

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_cols,):
            raise ValueError(f"vector of length {self.n_cols} expected, got shape {x.shape}")
        return np.bincount(self._row_of_entry(), weights=self.data * x[self.indices],
                           minlength=self.n_rows)

    def rmatvec(self, y) -> np.ndarray:
        """``Gamma.T @ y``."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.n_rows,):
            raise ValueError(f"vector of length {self.n_rows} expected, got shape {y.shape}")
        return np.bincount(self.indices, weights=self.data * y[self._row_of_entry()],
                           minlength=self.n_cols)

    def toarray(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        out[self._row_of_entry(), self.indices] = self.data
        return out


def flatten(w) -> np.ndarray:
    """Canonical flat weight vector: slab-major, then row-major within a slab."""
    slabs = w.slabs if isinstance(w, VRWeights) else np.asarray(w, dtype=np.float64)
    return slabs.reshape(-1).copy()


def build_gamma(slab_shape, slab_count: int, ker: RelKernel) -> SparseMat:
    h, w = slab_shape
    if h < 1 or w < 1 or slab_count < 1:
        raise ValueError(f"invalid geometry: {slab_count} slabs of {h}x{w}")
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    base = np.arange(slab_count)[:, None] * (h * w)

    rows, cols, vals = [], [], []
    for (di, dj), a in ker.offsets():
        if a == 0.0:
            continue
        p, q = ii + di, jj + dj
        ok = (p >= 0) & (p < h) & (q >= 0) & (q < w)
        pix = (ii * w + jj)[ok]
        tgt = (p * w + q)[ok]
        rows.append((base + pix).ravel())
        cols.append((base + tgt).ravel())
        vals.append(np.full(rows[-1].shape, a))
    n = slab_count * h * w
    if not rows:
        return SparseMat.from_triplets(n, n, [], [], [])
    return SparseMat.from_triplets(n, n, np.concatenate(rows), np.concatenate(cols),
                                   np.concatenate(vals))


def gamma_for(w: VRWeights | np.ndarray, ker: RelKernel) -> SparseMat:
    slabs = w.slabs if isinstance(w, VRWeights) else np.asarray(w)
    return build_gamma(slabs.shape[1:], slabs.shape[0], ker)


def gamma_quadratic(gamma: SparseMat, w) -> float:
    y = gamma.matvec(flatten(w))
    return float(y @ y)


def gamma_gradient(gamma: SparseMat, w) -> np.ndarray:
    """Gradient of ``||Gamma w||**2``: ``2 Gamma^T Gamma w``."""
    return 2.0 * gamma.rmatvec(gamma.matvec(flatten(w)))


def gamma_stats(gamma: SparseMat) -> dict:
    return {"nnz": gamma.nnz, "density": gamma.nnz / (gamma.n_rows * gamma.n_cols)}


def write_triplets(gamma: SparseMat, path) -> None:
    """One ``row col value`` line per stored coefficient, sorted by (row, col)."""
    rows = gamma._row_of_entry()
    with open(path, "w") as f:
        f.write(f"# {gamma.n_rows} {gamma.n_cols} {gamma.nnz}\n")
        for r, c, v in zip(rows, gamma.indices, gamma.data):
            f.write(f"{r} {c} {float(v)!r}\n")


def read_triplets(path) -> SparseMat:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing '# n_rows n_cols nnz' header")
    n_rows, n_cols, nnz = (int(t) for t in lines[0][1:].split())
    body = [ln.split() for ln in lines[1:] if ln.strip()]
    if len(body) != nnz:
        raise ValueError(f"{path}: header declares {nnz} entries, found {len(body)}")
    rows = [int(b[0]) for b in body]
    cols = [int(b[1]) for b in body]
    vals = [float(b[2]) for b in body]
    return SparseMat.from_triplets(n_rows, n_cols, rows, cols, vals)
