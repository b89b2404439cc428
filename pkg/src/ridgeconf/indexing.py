"""Half-vectorization and the duplication / commutation / reordering matrices.

Conventions: ``vec`` stacks columns; ``vech`` stacks the lower triangle
column by column, so for d = 2 it is (a11, a21, a22); ``dvech`` lists the
diagonal first and then the strict lower triangle in ``vech`` order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


def vech_pairs(d: int) -> list[tuple[int, int]]:
    """(row, col) of each vech position, row >= col."""
    return [(i, j) for j in range(d) for i in range(j, d)]


def dvech_pairs(d: int) -> list[tuple[int, int]]:
    """(row, col) of each dvech position: diagonal, then strict lower triangle."""
    return [(i, i) for i in range(d)] + [(i, j) for (i, j) in vech_pairs(d) if i != j]


def vech(a: np.ndarray) -> np.ndarray:
    """Lower-triangular half-vectorization over the last two axes."""
    d = a.shape[-1]
    rows, cols = zip(*vech_pairs(d))
    return a[..., list(rows), list(cols)]


def unvech(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vech`, returning symmetric matrices."""
    m = v.shape[-1]
    d = int(round((np.sqrt(8 * m + 1) - 1) / 2))
    if d * (d + 1) // 2 != m:
        raise ValueError(f"length {m} is not a triangular number")
    out = np.zeros(v.shape[:-1] + (d, d))
    for k, (i, j) in enumerate(vech_pairs(d)):
        out[..., i, j] = v[..., k]
        out[..., j, i] = v[..., k]
    return out


def vec(a: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization over the last two axes."""
    return np.swapaxes(a, -1, -2).reshape(a.shape[:-2] + (-1,))


def dvech(a: np.ndarray) -> np.ndarray:
    d = a.shape[-1]
    rows, cols = zip(*dvech_pairs(d))
    return a[..., list(rows), list(cols)]


@dataclass(frozen=True)
class IndexMaps:
    """Index machinery for symmetric d x d matrices.

    ``pi_map[k]`` is the (row, col) pair of the k-th ``dvech`` entry, so
    ``pi_map[:d]`` are the diagonal entries.
    """

    d: int
    dup: np.ndarray
    dup_pinv: np.ndarray
    commutation: np.ndarray
    reorder: np.ndarray
    pi_map: tuple

    @property
    def m(self) -> int:
        return self.d * (self.d + 1) // 2

    def offdiag_index(self, i: int, j: int) -> int:
        """dvech position of entry (i, j); for i == j this is the diagonal slot."""
        if i == j:
            return i
        a, b = max(i, j), min(i, j)
        return self.pi_map.index((a, b))


@lru_cache(maxsize=16)
def build_index_maps(d: int) -> IndexMaps:
    if d < 2:
        raise ValueError("dimension must be at least 2")
    m = d * (d + 1) // 2
    dup = np.zeros((d * d, m))
    for k, (i, j) in enumerate(vech_pairs(d)):
        dup[j * d + i, k] = 1.0
        dup[i * d + j, k] = 1.0
    comm = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            # vec(A)[j*d + i] = A[i, j]; vec(A^T)[i*d + j] = A[i, j]
            comm[i * d + j, j * d + i] = 1.0
    vp = vech_pairs(d)
    dp = dvech_pairs(d)
    reorder = np.zeros((m, m))
    for k, pair in enumerate(dp):
        reorder[k, vp.index(pair)] = 1.0
    for arr in (dup, comm, reorder):
        arr.setflags(write=False)
    dup_pinv = np.linalg.pinv(dup)
    dup_pinv.setflags(write=False)
    return IndexMaps(d, dup, dup_pinv, comm, reorder, tuple(dp))
