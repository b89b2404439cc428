"""Kernel density estimator and its partial derivatives up to order 4.

The kernel has support radius exactly h, so only sample points within
distance h of a query contribute. Neighbour pairs come from a k-d tree; each
query's contributions are summed in sample-index order so results do not
depend on how queries are chunked or distributed over workers.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .density import SampleSet
from .derivs import DerivPack
from .errors import UnsupportedOrderError
from .kernel import KernelSpec, kernel_eval, kernel_tensors

PAIR_BATCH = 200_000
COMPENSATED_MIN_N = 10_000
SUM_BLOCK = 64  # plain-summed run length inside compensated sums


@dataclass(frozen=True)
class Bandwidths:
    """Main bandwidth h and auxiliary bandwidth l (bias correction, c-hat)."""

    h: float
    l: float

    def __post_init__(self):
        if not (self.h > 0 and self.l > 0):
            raise ValueError("bandwidths must be positive")
        if self.h >= self.l:
            warnings.warn("h >= l: explicit bias correction expects h/l -> 0", RuntimeWarning, stacklevel=2)

    @property
    def ratio_ok(self) -> bool:
        return self.h < self.l


def rate_bandwidth(n: int, d: int, scale: float = 1.0, exponent: float | None = None) -> float:
    """Configurable rate rule h = scale * n^(-exponent), default exponent 1/(d+6)."""
    if exponent is None:
        exponent = 1.0 / (d + 6)
    return scale * n ** (-exponent)


def gamma_rate(n: int, h: float, d: int, k: int) -> float:
    """sqrt(log n / (n h^(d+2k))), the uniform rate for order-k derivatives."""
    return float(np.sqrt(np.log(n) / (n * h ** (d + 2 * k))))


@dataclass(frozen=True)
class EvalGrid:
    """Regular grid; points are enumerated in row-major (C) order."""

    origin: np.ndarray
    spacing: np.ndarray
    shape: tuple

    def __post_init__(self):
        origin = np.asarray(self.origin, float).reshape(-1)
        spacing = np.broadcast_to(np.asarray(self.spacing, float), origin.shape).copy()
        shape = tuple(int(s) for s in np.broadcast_to(np.asarray(self.shape), origin.shape))
        if np.any(spacing <= 0):
            raise ValueError("grid spacing must be positive")
        if min(shape) < 1:
            raise ValueError("grid shape must be positive")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def covering(cls, box, spacing: float) -> "EvalGrid":
        box = np.asarray(box, float)
        shape = tuple(int(np.floor((hi - lo) / spacing + 1e-9)) + 1 for lo, hi in box)
        return cls(box[:, 0], np.full(len(box), spacing), shape)

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axes(self) -> list[np.ndarray]:
        return [o + s * np.arange(n) for o, s, n in zip(self.origin, self.spacing, self.shape)]

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    def to_dict(self) -> dict:
        return {"origin": self.origin.tolist(), "spacing": self.spacing.tolist(), "shape": list(self.shape)}


def _neumaier_segments(vals: np.ndarray, seg: np.ndarray, nseg: int, block: int = SUM_BLOCK) -> np.ndarray:
    """Compensated per-segment sums; ``seg`` is sorted, rows summed in order.

    Each segment is cut into runs of ``block`` consecutive rows that are
    summed plainly; the run totals are then combined with Neumaier's
    compensated update, so the loop length is max_count / block rather than
    max_count.
    """
    starts = np.searchsorted(seg, np.arange(nseg))
    blk = (np.arange(len(seg)) - starts[seg]) // block
    cut = np.flatnonzero(np.r_[True, (seg[1:] != seg[:-1]) | (blk[1:] != blk[:-1])])
    partial = np.add.reduceat(vals, cut, axis=0)
    g_seg, g_blk = seg[cut], blk[cut]
    order = np.argsort(g_blk, kind="stable")
    g_seg, g_blk, partial = g_seg[order], g_blk[order], partial[order]
    edges = np.searchsorted(g_blk, np.arange(int(g_blk.max(initial=-1)) + 2))
    total = np.zeros((nseg,) + vals.shape[1:])
    comp = np.zeros_like(total)
    for a, b in zip(edges[:-1], edges[1:]):
        rows = g_seg[a:b]
        x = partial[a:b]
        s = total[rows]
        t = s + x
        big = np.abs(s) >= np.abs(x)
        comp[rows] += np.where(big, (s - t) + x, (x - t) + s)
        total[rows] = t
    return total + comp


class KernelDensity:
    """KDE of a sample with a fixed kernel and bandwidth."""

    def __init__(self, sample: SampleSet, spec: KernelSpec, h: float):
        if h <= 0:
            raise ValueError("bandwidth must be positive")
        if sample.d != spec.d:
            raise ValueError("sample and kernel dimensions differ")
        self.sample = sample
        self.spec = spec
        self.h = float(h)
        self.tree = cKDTree(sample.points)
        self.compensated = sample.n >= COMPENSATED_MIN_N

    def _pairs(self, X: np.ndarray):
        qtree = cKDTree(X)
        sp = qtree.sparse_distance_matrix(self.tree, self.h, output_type="ndarray")
        qi = sp["i"].astype(np.int64)
        sj = sp["j"].astype(np.int64)
        order = np.lexsort((sj, qi))
        return qi[order], sj[order]

    def _accumulate(self, X: np.ndarray, max_order: int) -> list[np.ndarray]:
        nq, d = X.shape
        ncomp = [d**k for k in range(max(max_order, 2) + 1)]
        out = np.zeros((nq, sum(ncomp)))
        qi, sj = self._pairs(X)
        if len(qi) == 0:
            return self._split(out, ncomp, nq, d)
        # split the pair list into batches that never cut a query's segment
        bounds = [0]
        while bounds[-1] < len(qi):
            stop = min(bounds[-1] + PAIR_BATCH, len(qi))
            if stop < len(qi):
                stop = int(np.searchsorted(qi, qi[stop], side="left"))
                if stop <= bounds[-1]:
                    stop = int(np.searchsorted(qi, qi[bounds[-1]], side="right"))
            bounds.append(stop)
        pts = self.sample.points
        for a, b in zip(bounds[:-1], bounds[1:]):
            q, s = qi[a:b], sj[a:b]
            u = (X[q] - pts[s]) / self.h
            tens = kernel_tensors(self.spec, u, max_order)
            vals = np.concatenate([t.reshape(len(u), -1) for t in tens], axis=1)
            uq, start = np.unique(q, return_index=True)
            if self.compensated:
                seg = np.searchsorted(uq, q)
                out[uq] = _neumaier_segments(vals, seg, len(uq))
            else:
                out[uq] = np.add.reduceat(vals, start, axis=0)
        return self._split(out, ncomp, nq, d)

    def _split(self, out, ncomp, nq, d):
        tens = []
        pos = 0
        n = self.sample.n
        for k, c in enumerate(ncomp):
            block = out[:, pos : pos + c].reshape((nq,) + (d,) * k)
            tens.append(block / (n * self.h ** (d + k)))
            pos += c
        return tens

    def pack(self, x, max_order: int = 2, chunk: int = 512) -> DerivPack:
        """All derivatives up to ``max_order`` (at least 2) at one or many points."""
        if max_order > 4:
            raise UnsupportedOrderError("KDE derivatives are available up to order 4")
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        parts = [self._accumulate(X[i : i + chunk], max_order) for i in range(0, len(X), chunk)]
        tens = [np.concatenate([p[k] for p in parts], axis=0) for k in range(len(parts[0]))]
        out = DerivPack.from_tensors(tens)
        return out[0] if single else out

    def eval(self, x, gamma=None) -> np.ndarray:
        """Single partial derivative via the generic kernel formula (no tensors)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        d = self.spec.d
        gamma = (0,) * d if gamma is None else tuple(gamma)
        order = sum(gamma)
        qi, sj = self._pairs(X)
        vals = kernel_eval(self.spec, (X[qi] - self.sample.points[sj]) / self.h, gamma)
        out = np.zeros(len(X))
        uq, start = np.unique(qi, return_index=True)
        if len(uq):
            out[uq] = np.add.reduceat(vals, start)
        out /= self.sample.n * self.h ** (d + order)
        return out[0] if single else out

    def grid(self, grid: EvalGrid, max_order: int = 2, workers: int = 1, chunk: int = 512) -> DerivPack:
        """Derivative packs at every grid point, reshaped to ``grid.shape``.

        Chunks are independent and each point's sum has a fixed order, so the
        result is identical for any ``workers``.
        """
        X = grid.points()
        starts = list(range(0, len(X), chunk))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                parts = list(ex.map(lambda i: self._accumulate(X[i : i + chunk], max_order), starts))
        else:
            parts = [self._accumulate(X[i : i + chunk], max_order) for i in starts]
        tens = []
        for k in range(len(parts[0])):
            t = np.concatenate([p[k] for p in parts], axis=0)
            tens.append(t.reshape(grid.shape + t.shape[1:]))
        return DerivPack.from_tensors(tens)


def kde_eval(sample: SampleSet, spec: KernelSpec, h: float, x, gamma=None) -> np.ndarray:
    return KernelDensity(sample, spec, h).eval(x, gamma)


def kde_pack(sample: SampleSet, spec: KernelSpec, h: float, x, max_order: int = 2) -> DerivPack:
    return KernelDensity(sample, spec, h).pack(x, max_order)


def kde_grid(sample: SampleSet, spec: KernelSpec, h: float, grid: EvalGrid, max_order: int = 2,
             workers: int = 1) -> DerivPack:
    return KernelDensity(sample, spec, h).grid(grid, max_order, workers)
