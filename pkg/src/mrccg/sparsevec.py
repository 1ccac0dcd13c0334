"""Sparse coefficient vectors.

Solutions live on a few hundred features out of possibly tens of thousands,
so coefficient vectors are stored as sorted (index, value) pairs over a fixed
ambient dimension.
"""

import numpy as np


class SparseVector:
    """Immutable sparse vector: sorted unique int64 indices, float64 values."""

    __slots__ = ("dim", "indices", "values")

    def __init__(self, dim, indices, values):
        indices = np.asarray(indices, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if indices.ndim != 1 or values.ndim != 1 or indices.shape != values.shape:
            raise ValueError("indices and values must be 1-d arrays of equal length")
        order = np.argsort(indices, kind="stable")
        indices = indices[order]
        values = values[order]
        if indices.size:
            if indices[0] < 0 or indices[-1] >= dim:
                raise ValueError("index out of range")
            if np.any(np.diff(indices) == 0):
                raise ValueError("duplicate indices")
        self.dim = int(dim)
        self.indices = indices
        self.values = values

    @classmethod
    def from_dense(cls, arr, tol=0.0):
        arr = np.asarray(arr, dtype=np.float64)
        idx = np.nonzero(np.abs(arr) > tol)[0]
        return cls(arr.shape[0], idx, arr[idx])

    @property
    def nnz(self):
        return int(self.indices.size)

    def to_dense(self):
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def restrict(self, subset):
        """Values of this vector on the sorted index array `subset`."""
        subset = np.asarray(subset, dtype=np.int64)
        out = np.zeros(subset.shape[0])
        pos = np.searchsorted(subset, self.indices)
        hit = (pos < subset.shape[0])
        hit[hit] = subset[pos[hit]] == self.indices[hit]
        out[pos[hit]] = self.values[hit]
        return out

    def norm1(self):
        return float(np.abs(self.values).sum())

    def __repr__(self):
        return f"SparseVector(dim={self.dim}, nnz={self.nnz})"
