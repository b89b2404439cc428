"""Pointwise ridge statistics from a derivative pack.

All functions accept a leading batch shape so the same code serves single
points, ridge point sets and whole evaluation grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .derivs import DerivPack
from .errors import DegenerateFrameError, SingularMatrixError
from .indexing import IndexMaps
from .kernel import KernelConstants

EIGEN_TOL = 1e-8


@dataclass(frozen=True)
class EigenFrame:
    """Eigenvalues in descending order and matching eigenvector columns."""

    eigenvalues: np.ndarray  # (..., d)
    eigenvectors: np.ndarray  # (..., d, d), column i pairs with eigenvalues[..., i]
    degenerate: np.ndarray  # (...,) bool: some adjacent gap below tolerance
    tol: np.ndarray

    def gap(self, r: int) -> np.ndarray:
        """lambda_r - lambda_{r+1} (1-based r)."""
        return self.eigenvalues[..., r - 1] - self.eigenvalues[..., r]

    def normal_basis(self, r: int) -> np.ndarray:
        """V = (v_{r+1}, ..., v_d)."""
        return self.eigenvectors[..., :, r:]

    def tangent_basis(self, r: int) -> np.ndarray:
        return self.eigenvectors[..., :, :r]


def _fix_signs(vecs: np.ndarray, ref: np.ndarray | None) -> np.ndarray:
    if ref is not None:
        dots = np.einsum("...ki,...ki->...i", vecs, ref)
        sign = np.where(dots < 0, -1.0, 1.0)
    else:
        # deterministic: largest-magnitude component of each vector positive
        idx = np.argmax(np.abs(vecs), axis=-2)
        lead = np.take_along_axis(vecs, idx[..., None, :], axis=-2)[..., 0, :]
        sign = np.where(lead < 0, -1.0, 1.0)
    return vecs * sign[..., None, :]


def ordered_eigen(H, orientation_ref=None, rel_tol: float = EIGEN_TOL) -> EigenFrame:
    """Eigen-decomposition with eigenvalues sorted from largest to smallest.

    With ``orientation_ref`` (same shape as the eigenvector array) each
    eigenvector is flipped to make an acute angle with its reference.
    Repeated eigenvalues are flagged in ``degenerate``, never perturbed.
    """
    H = np.asarray(H, dtype=float)
    scale = np.max(np.abs(H), axis=(-1, -2), initial=0.0)
    if not np.allclose(H, np.swapaxes(H, -1, -2), atol=1e-12 * np.max(scale, initial=1.0), rtol=0):
        raise ValueError("matrix is not symmetric")
    lam, vec = np.linalg.eigh(H)
    lam = lam[..., ::-1]
    vec = vec[..., :, ::-1]
    vec = _fix_signs(vec, None if orientation_ref is None else np.asarray(orientation_ref, float))
    tol = rel_tol * np.linalg.norm(H, axis=(-1, -2))
    gaps = -np.diff(lam, axis=-1)
    degenerate = np.any(gaps <= tol[..., None], axis=-1)
    return EigenFrame(lam, vec, degenerate, tol)


def propagate_orientation(vectors: np.ndarray, order=None) -> np.ndarray:
    """Serial pass that flips eigenvectors to agree with their predecessor.

    ``vectors`` has shape (N, d, k); ``order`` is the visiting order (default:
    index order, i.e. row-major for flattened grids).
    """
    out = np.array(vectors, dtype=float, copy=True)
    order = np.arange(len(out)) if order is None else np.asarray(order)
    prev = None
    for idx in order:
        if prev is not None:
            dots = np.einsum("ki,ki->i", out[idx], out[prev])
            out[idx] *= np.where(dots < 0, -1.0, 1.0)[None, :]
        prev = idx
    return out


def _m_matrix(grad, lam, vecs, r, maps: IndexMaps, mode: str = "full"):
    """Columns m_{r+1..d} for a batch; returns (M, min_gap)."""
    d = maps.d
    V = vecs
    proj = np.einsum("...ki,...k->...i", V, grad)  # v_j^T grad f, all j
    cols = []
    # zero gaps are reported through ``gap``, so inf / nan here are expected
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(r, d):
            if mode == "full":
                coef = proj[..., :r] / (lam[..., i, None] - lam[..., :r])
                w = np.einsum("...j,...kj->...k", coef, V[..., :, :r])
                outer = V[..., :, i, None] * w[..., None, :]
            elif mode == "r1_simplified":
                if r != 1:
                    raise ValueError("the simplified form only applies to r = 1")
                g = np.linalg.norm(grad, axis=-1) / (lam[..., i] - lam[..., 0])
                outer = g[..., None, None] * V[..., :, i, None] * V[..., None, :, 0]
            else:
                raise ValueError(f"unknown mode {mode!r}")
            kron = outer.reshape(outer.shape[:-2] + (d * d,))
            cols.append(kron @ maps.dup)
    M = np.stack(cols, axis=-1)
    gap = lam[..., r - 1] - lam[..., r]
    return M, gap


def m_vectors(pack: DerivPack, frame: EigenFrame, r: int, maps: IndexMaps, mode: str = "full"):
    """The d(d+1)/2 x (d - r) matrix M = (m_{r+1}, ..., m_d)."""
    _check_r(r, maps.d)
    M, gap = _m_matrix(pack.grad, frame.eigenvalues, frame.eigenvectors, r, maps, mode)
    if np.any(gap <= frame.tol):
        raise DegenerateFrameError("eigengap lambda_r - lambda_{r+1} is below tolerance")
    return M


def _check_r(r: int, d: int):
    if not 1 <= r < d:
        raise ValueError(f"ridge dimension r must satisfy 1 <= r < d (got r={r}, d={d})")


def inv_sqrt_spd(S, tol: float = 1e-14) -> np.ndarray:
    """Symmetric inverse square root T of an SPD matrix, T S T = I."""
    S = np.asarray(S, dtype=float)
    e, U = np.linalg.eigh(0.5 * (S + np.swapaxes(S, -1, -2)))
    scale = np.max(np.abs(e), axis=-1, keepdims=True)
    if np.any(e <= tol * np.maximum(scale, 1e-300)):
        raise SingularMatrixError("matrix is not positive definite")
    return np.einsum("...ik,...k,...jk->...ij", U, 1.0 / np.sqrt(e), U)


def _inv_sqrt_regularized(S):
    """Batch inverse square root; returns (T, flag) with flag where S + eps I was used."""
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    e, U = np.linalg.eigh(S)
    tr = np.trace(S, axis1=-2, axis2=-1)
    eps = 1e-10 * np.abs(tr)
    bad = ~(e.min(axis=-1) > eps) | ~np.isfinite(e).all(axis=-1)
    e = np.where(bad[..., None], np.abs(e) + np.maximum(eps, 1e-300)[..., None], e)
    T = np.einsum("...ik,...k,...jk->...ij", U, 1.0 / np.sqrt(e), U)
    return T, bad


@dataclass(frozen=True)
class RidgeDiagnostics:
    """Ridge statistics at one or many points (batched arrays)."""

    frame: EigenFrame
    proj_grad: np.ndarray  # (..., d - r)
    lambda_rp1: np.ndarray
    M: np.ndarray  # (..., m, d - r)
    Sigma: np.ndarray  # (..., d - r, d - r)
    Qn: np.ndarray
    Bn: np.ndarray
    eigengap: np.ndarray
    near_critical: np.ndarray  # bool: f <= 0 or Sigma not PD (regularized)
    density: np.ndarray


def ridge_stats(pack: DerivPack, r: int, consts: KernelConstants, maps: IndexMaps,
                orientation_ref=None, mode: str = "full") -> RidgeDiagnostics:
    """Frame, V^T grad f, M, Sigma, Q_n = [f Sigma]^{-1/2} and B_n."""
    _check_r(r, maps.d)
    frame = ordered_eigen(pack.hess, orientation_ref)
    V = frame.normal_basis(r)
    proj = np.einsum("...ki,...k->...i", V, pack.grad)
    M, gap = _m_matrix(pack.grad, frame.eigenvalues, frame.eigenvectors, r, maps, mode)
    Sigma = np.einsum("...ai,ab,...bj->...ij", M, consts.R, M)
    fS = pack.value[..., None, None] * Sigma
    Qn, flag = _inv_sqrt_regularized(fS)
    flag = flag | (pack.value <= 0) | (gap <= frame.tol)
    Bn = np.linalg.norm(np.einsum("...ij,...j->...i", Qn, proj), axis=-1)
    return RidgeDiagnostics(
        frame, proj, frame.eigenvalues[..., r], M, Sigma, Qn, Bn, gap, flag, pack.value
    )


def sigma_lower_bound(frame: EigenFrame, grad, r: int, consts: KernelConstants, maps: IndexMaps):
    """Lower bound on the smallest eigenvalue of Sigma at a regular point."""
    lam, V = frame.eigenvalues, frame.eigenvectors
    proj = np.einsum("...ki,...k->...i", V, grad)
    sums = []
    for i in range(r, maps.d):
        c = proj[..., :r] / (lam[..., i, None] - lam[..., :r])
        sums.append(np.sum(c**2, axis=-1))
    lmin_R = np.linalg.eigvalsh(consts.R).min()
    lmax_dd = np.linalg.eigvalsh(maps.dup_pinv @ maps.dup_pinv.T).max()
    return lmin_R / (2.0 * lmax_dd) * np.min(np.stack(sums, -1), axis=-1)
