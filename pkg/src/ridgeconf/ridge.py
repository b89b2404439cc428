"""Ridge point sets: subspace-constrained Newton iteration, deduplication,
polyline linking and discrete surface weights.

The solver works on any callable returning a derivative pack, so the same
code traces the ridge of a KDE, of a smoothed density or of an exact model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .density import SampleSet
from .geometry import EigenFrame, RidgeDiagnostics, _check_r, ordered_eigen, ridge_stats
from .indexing import IndexMaps, build_index_maps
from .kde import EvalGrid, KernelDensity
from .kernel import KernelSpec, kernel_constants

DEFAULT_CONV_TOL = 1e-9


@dataclass
class Polyline:
    indices: np.ndarray  # point indices in chain order
    closed: bool

    def length(self, points: np.ndarray) -> float:
        p = points[self.indices]
        seg = np.linalg.norm(np.diff(p, axis=0), axis=1).sum()
        if self.closed and len(p) > 2:
            seg += np.linalg.norm(p[-1] - p[0])
        return float(seg)


@dataclass
class RidgeSet:
    """Discrete ridge: points with frames and per-point ridge conditions."""

    points: np.ndarray  # (m, d)
    tangents: np.ndarray  # (m, d, r)
    normals: np.ndarray  # (m, d, d - r)
    lambda_rp1: np.ndarray
    proj_grad_norm: np.ndarray
    density: np.ndarray
    eigengap: np.ndarray
    degenerate: np.ndarray
    r: int
    resolution: float
    diagnostics: RidgeDiagnostics | None = None
    polylines: list = field(default_factory=list)
    weights: np.ndarray | None = None
    report: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.points)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def empty(self) -> bool:
        return self.m == 0

    @property
    def length(self) -> float:
        return float(sum(pl.length(self.points) for pl in self.polylines))

    def subset(self, mask) -> "RidgeSet":
        idx = np.flatnonzero(np.asarray(mask)) if np.asarray(mask).dtype == bool else np.asarray(mask)
        diag = None
        if self.diagnostics is not None:
            diag = _take_diag(self.diagnostics, idx)
        return replace(
            self,
            points=self.points[idx],
            tangents=self.tangents[idx],
            normals=self.normals[idx],
            lambda_rp1=self.lambda_rp1[idx],
            proj_grad_norm=self.proj_grad_norm[idx],
            density=self.density[idx],
            eigengap=self.eigengap[idx],
            degenerate=self.degenerate[idx],
            diagnostics=diag,
            polylines=[],
            weights=None,
        )


def _take_diag(diag: RidgeDiagnostics, idx) -> RidgeDiagnostics:
    fr = diag.frame
    frame = EigenFrame(fr.eigenvalues[idx], fr.eigenvectors[idx], fr.degenerate[idx], fr.tol[idx])
    return RidgeDiagnostics(
        frame,
        diag.proj_grad[idx],
        diag.lambda_rp1[idx],
        diag.M[idx],
        diag.Sigma[idx],
        diag.Qn[idx],
        diag.Bn[idx],
        diag.eigengap[idx],
        diag.near_critical[idx],
        diag.density[idx],
    )


def seed_grid(box, spacing: float) -> np.ndarray:
    """Grid of seed points covering ``box`` (cell centres, row-major)."""
    box = np.asarray(box, float)
    axes = []
    for lo, hi in box:
        k = max(1, int(math.ceil((hi - lo) / spacing - 1e-9)))
        step = (hi - lo) / k
        axes.append(lo + step * (np.arange(k) + 0.5))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


def _in_box(x, box, margin=0.0):
    return np.all((x >= box[:, 0] - margin) & (x <= box[:, 1] + margin), axis=-1)


def dedupe(points: np.ndarray, radius: float) -> np.ndarray:
    """Indices kept by a greedy pass in input order (first point wins)."""
    if len(points) == 0:
        return np.zeros(0, dtype=int)
    tree = cKDTree(points)
    removed = np.zeros(len(points), dtype=bool)
    keep = []
    for i in range(len(points)):
        if removed[i]:
            continue
        keep.append(i)
        removed[tree.query_ball_point(points[i], radius)] = True
    return np.asarray(keep, dtype=int)


def trace_ridge(
    pack_fn,
    seeds,
    r: int,
    box=None,
    resolution: float = 0.05,
    conv_tol: float = DEFAULT_CONV_TOL,
    max_iter: int = 100,
    step_scale: float | None = None,
    min_density: float = 0.0,
    dedup: bool = True,
) -> RidgeSet:
    """Move every seed onto {V^T grad f = 0} and keep points with lambda_{r+1} < 0.

    Newton step restricted to the normal space when the normal block of the
    Hessian is negative definite, otherwise an ascent step along V V^T grad f.
    ``step_scale`` (a length, e.g. the bandwidth) caps each step at half its
    size; it defaults to ``resolution``.
    """
    seeds = np.atleast_2d(np.asarray(seeds, float))
    d = seeds.shape[1]
    _check_r(r, d)
    box = None if box is None else np.asarray(box, float)
    scale = resolution if step_scale is None else float(step_scale)
    cap = 0.5 * scale

    x = seeds.copy()
    if box is not None:
        x = x[_in_box(x, box)]
    n_seeds = len(x)
    first = pack_fn(x) if len(x) else None
    if first is not None and min_density > 0:
        keep = first.value > min_density
        x = x[keep]
    active = np.ones(len(x), dtype=bool)
    done = np.zeros(len(x), dtype=bool)
    iters = np.zeros(len(x), dtype=int)
    for it in range(max_iter):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        pk = pack_fn(x[idx])
        frame = ordered_eigen(pk.hess)
        V = frame.normal_basis(r)
        g = np.einsum("nki,nk->ni", V, pk.grad)
        gnorm = np.linalg.norm(g, axis=1)
        conv = gnorm <= conv_tol
        done[idx[conv]] = True
        active[idx[conv]] = False
        step_idx = ~conv
        lam = frame.eigenvalues[:, r:]
        newton = np.all(lam < 0, axis=1)
        coef = np.where(newton[:, None], -g / np.where(newton[:, None], lam, 1.0), 0.0)
        # ascent fallback: mean-shift sized step along the projected gradient
        f = np.maximum(pk.value, 1e-300)
        ascent = g * (scale**2 / (d + 2)) / f[:, None]
        coef = np.where(newton[:, None], coef, ascent)
        delta = np.einsum("nki,ni->nk", V, coef)
        norm = np.linalg.norm(delta, axis=1)
        shrink = np.where(norm > cap, cap / np.maximum(norm, 1e-300), 1.0)
        delta *= shrink[:, None]
        moving = idx[step_idx]
        x[moving] += delta[step_idx]
        iters[moving] += 1
        if box is not None:
            gone = ~_in_box(x[moving], box, margin=2 * scale)
            active[moving[gone]] = False
        dead = pk.value[step_idx] <= min_density
        active[moving[dead]] = False
    pts = x[done]
    if box is not None:
        pts = pts[_in_box(pts, box)]
    n_conv = len(pts)
    if len(pts):
        pk = pack_fn(pts)
        frame = ordered_eigen(pk.hess)
        ok = (frame.eigenvalues[:, r] < 0) & (pk.value > min_density)
        pts = pts[ok]
    n_ridge = len(pts)
    if dedup and len(pts):
        pts = pts[dedupe(pts, resolution / 2)]
    rs = _build_set(pack_fn, pts, r, resolution)
    rs.report.update(
        n_seeds=int(n_seeds),
        n_converged=int(n_conv),
        n_negative_curvature=int(n_ridge),
        n_points=int(rs.m),
        n_degenerate=int(np.sum(rs.degenerate)),
        min_eigengap=float(rs.eigengap.min()) if rs.m else None,
        max_lambda_rp1=float(rs.lambda_rp1.max()) if rs.m else None,
        max_proj_grad=float(rs.proj_grad_norm.max()) if rs.m else None,
    )
    return rs


def _build_set(pack_fn, pts, r, resolution) -> RidgeSet:
    d = pts.shape[1] if pts.ndim == 2 else 0
    if len(pts) == 0:
        return RidgeSet(
            np.zeros((0, d)), np.zeros((0, d, r)), np.zeros((0, d, d - r)), np.zeros(0),
            np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0, bool), r, resolution,
        )
    pk = pack_fn(pts)
    frame = ordered_eigen(pk.hess)
    V = frame.normal_basis(r)
    g = np.einsum("nki,nk->ni", V, pk.grad)
    return RidgeSet(
        pts,
        frame.tangent_basis(r).copy(),
        V.copy(),
        frame.eigenvalues[:, r].copy(),
        np.linalg.norm(g, axis=1),
        pk.value.copy(),
        frame.gap(r),
        frame.degenerate.copy(),
        r,
        resolution,
    )


def _seed_points(seeds, box, sample: SampleSet, h: float):
    if isinstance(seeds, EvalGrid):
        return seeds.points()
    if seeds is None or np.isscalar(seeds):
        if box is None:
            lo = sample.points.min(axis=0) - h
            hi = sample.points.max(axis=0) + h
            box = np.stack([lo, hi], axis=1)
        spacing = h / 4 if seeds is None else float(seeds)
        return seed_grid(box, spacing)
    return np.atleast_2d(np.asarray(seeds, float))


def find_ridge(
    sample: SampleSet,
    spec: KernelSpec,
    h: float,
    r: int,
    seeds=None,
    box=None,
    resolution: float | None = None,
    conv_tol: float = DEFAULT_CONV_TOL,
    max_iter: int = 100,
    min_density: float = 0.0,
    with_diagnostics: bool = True,
) -> RidgeSet:
    """Estimated ridge of the KDE with bandwidth ``h``.

    ``seeds`` may be an array of points, an :class:`EvalGrid`, or a spacing
    (seeds on a grid over ``box``; default spacing h/4). ``box`` restricts
    the returned points; ``resolution`` is the deduplication spacing
    (default: the seed spacing, or h/4).
    """
    kd = KernelDensity(sample, spec, h)
    pts = _seed_points(seeds, box, sample, h)
    if resolution is None:
        resolution = float(seeds) if np.isscalar(seeds) and seeds is not None else h / 4
    rs = trace_ridge(
        lambda x: kd.pack(x, 2), pts, r, box=box, resolution=resolution, conv_tol=conv_tol,
        max_iter=max_iter, step_scale=h, min_density=min_density,
    )
    if with_diagnostics and rs.m:
        maps = build_index_maps(spec.d)
        consts = kernel_constants(spec)
        rs.diagnostics = ridge_stats(kd.pack(rs.points, 2), r, consts, maps)
    return rs


def attach_diagnostics(rs: RidgeSet, pack_fn, consts, maps: IndexMaps, orientation_ref=None) -> RidgeSet:
    if rs.m:
        rs.diagnostics = ridge_stats(pack_fn(rs.points), rs.r, consts, maps, orientation_ref)
    return rs


def link_polyline(rs: RidgeSet, max_gap: float | None = None, max_angle_deg: float = 60.0) -> RidgeSet:
    """Chain r = 1 ridge points into polylines and attach arc-length weights.

    Each chain grows from its lowest unvisited index, first along the
    tangent and then against it, always to the nearest unvisited point within
    ``max_gap`` (default 3 x resolution) whose offset makes an angle of at
    most ``max_angle_deg`` with the current direction. A chain whose end
    returns to its start is closed.
    """
    if rs.r != 1:
        raise NotImplementedError("polylines exist only for r = 1; use patch_weights for r >= 2")
    gap = 3.0 * rs.resolution if max_gap is None else float(max_gap)
    cosmax = math.cos(math.radians(max_angle_deg))
    pts = rs.points
    m = len(pts)
    lines = []
    if m == 0:
        rs.polylines, rs.weights = [], np.zeros(0)
        return rs
    tree = cKDTree(pts)
    visited = np.zeros(m, dtype=bool)

    def walk(start, direction):
        chain = []
        cur, dvec = start, direction
        while True:
            nb = [j for j in tree.query_ball_point(pts[cur], gap) if not visited[j]]
            best, bestd = None, np.inf
            for j in nb:
                off = pts[j] - pts[cur]
                dist = np.linalg.norm(off)
                if dist == 0:
                    continue
                if off @ dvec / dist >= cosmax and dist < bestd:
                    best, bestd = j, dist
            if best is None:
                return chain
            off = (pts[best] - pts[cur]) / bestd
            t = rs.tangents[best, :, 0]
            dvec = t if t @ off >= 0 else -t
            visited[best] = True
            chain.append(best)
            cur = best

    for s in range(m):
        if visited[s]:
            continue
        visited[s] = True
        t0 = rs.tangents[s, :, 0]
        fwd = walk(s, t0)
        closed = False
        if len(fwd) >= 2:
            end = fwd[-1]
            off = pts[s] - pts[end]
            dist = np.linalg.norm(off)
            t_end = rs.tangents[end, :, 0]
            prev = pts[end] - pts[fwd[-2]]
            dir_end = t_end if t_end @ prev >= 0 else -t_end
            closed = 0 < dist <= gap and off @ dir_end / dist >= cosmax
        bwd = [] if closed else walk(s, -t0)
        chain = np.asarray(bwd[::-1] + [s] + fwd, dtype=int)
        lines.append(Polyline(chain, bool(closed)))
    rs.polylines = lines
    rs.weights = arc_weights(pts, lines)
    return rs


def arc_weights(points: np.ndarray, lines) -> np.ndarray:
    """Trapezoid weights: each point gets half of each adjacent segment."""
    w = np.zeros(len(points))
    for pl in lines:
        idx = pl.indices
        if len(idx) < 2:
            continue
        seg = np.linalg.norm(np.diff(points[idx], axis=0), axis=1)
        w[idx[:-1]] += seg / 2
        w[idx[1:]] += seg / 2
        if pl.closed and len(idx) > 2:
            last = np.linalg.norm(points[idx[-1]] - points[idx[0]])
            w[idx[-1]] += last / 2
            w[idx[0]] += last / 2
    return w


def patch_weights(rs: RidgeSet, bandwidth: float | None = None) -> np.ndarray:
    """r-volume weights for r >= 2: inverse local point density on the surface.

    Neighbours are projected onto each point's tangent plane and counted with
    an r-dimensional Gaussian of width ``bandwidth`` (default 1.5 times the
    median nearest-neighbour distance); the weight is the reciprocal of that
    density. Points near a boundary of the set are over-weighted.
    """
    m, r = rs.m, rs.r
    if m <= 1:
        return np.zeros(m)
    tree = cKDTree(rs.points)
    if bandwidth is None:
        nn, _ = tree.query(rs.points, 2)
        bandwidth = 1.5 * float(np.median(nn[:, 1]))
    norm = (2 * math.pi * bandwidth**2) ** (r / 2)
    w = np.zeros(m)
    for i, nb in enumerate(tree.query_ball_point(rs.points, 4 * bandwidth)):
        u = (rs.points[nb] - rs.points[i]) @ rs.tangents[i]
        w[i] = norm / np.exp(-0.5 * np.sum(u * u, axis=1) / bandwidth**2).sum()
    return w


def surface_weights(rs: RidgeSet) -> np.ndarray:
    if rs.r == 1:
        if rs.weights is None:
            link_polyline(rs)
        return rs.weights
    return patch_weights(rs)


def densify(rs: RidgeSet, pack_fn, spacing: float, box=None, **kwargs) -> RidgeSet:
    """Resample linked polylines at ``spacing`` and re-project onto the ridge."""
    if not rs.polylines:
        link_polyline(rs)
    seeds = []
    for pl in rs.polylines:
        p = rs.points[pl.indices]
        if pl.closed and len(p) > 2:
            p = np.vstack([p, p[:1]])
        if len(p) < 2:
            seeds.append(p)
            continue
        seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        # equal steps no longer than ``spacing`` that keep both ends of an open chain
        k = max(1, math.ceil(s[-1] / spacing - 1e-9))
        grid = np.linspace(0.0, s[-1], k + 1)
        if pl.closed and len(pl.indices) > 2:
            grid = grid[:-1]
        seeds.append(np.stack([np.interp(grid, s, p[:, j]) for j in range(p.shape[1])], axis=-1))
    seeds = np.vstack(seeds) if seeds else np.zeros((0, rs.d))
    kwargs.setdefault("resolution", spacing)
    return trace_ridge(pack_fn, seeds, rs.r, box=box, **kwargs)


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two finite point sets."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if len(a) == 0 or len(b) == 0:
        return math.inf
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(max(da.max(), db.max()))
