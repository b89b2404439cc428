"""Compactly supported polynomial kernel, its derivatives and derived constants.

The kernel is ``K(x) = c_d (1 - |x|^2)^p`` on the closed unit ball. Writing
``K = c_d * phi(|x|^2)`` every partial derivative is a sum over the ways to
group the differentiation indices into singletons (each contributing
``2 x_i``) and pairs (each contributing ``2 delta_ij``), weighted by
``phi^(number of groups)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .errors import UnsupportedOrderError
from .indexing import IndexMaps, build_index_maps, vech, vech_pairs
from .quadrature import ball_rule, cube_rule

MAX_ORDER = 4


@dataclass(frozen=True)
class KernelSpec:
    d: int
    exponent: int = 5
    norm_const: float = field(init=False)

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("kernel dimension must be >= 2")
        if self.exponent < 4:
            raise ValueError("exponent must be >= 4 for four continuous derivatives")
        p, d = self.exponent, self.d
        log_c = gammaln(d / 2 + p + 1) - gammaln(p + 1) - 0.5 * d * math.log(math.pi)
        object.__setattr__(self, "norm_const", float(math.exp(log_c)))


def _phi_derivs(spec: KernelSpec, s: np.ndarray, max_order: int) -> list[np.ndarray]:
    """c_d * d^k/ds^k (1 - s)^p for k = 0..max_order, zero outside the ball."""
    p = spec.exponent
    w = np.clip(1.0 - s, 0.0, None)
    out = []
    coef = spec.norm_const
    for k in range(max_order + 1):
        out.append(coef * w ** (p - k))
        coef *= -(p - k)
    return out


def _matchings(idx: tuple) -> list[tuple[list[int], list[tuple[int, int]]]]:
    """All ways to split positions of ``idx`` into singletons and pairs."""
    positions = list(range(len(idx)))

    def rec(rest):
        if not rest:
            yield [], []
            return
        first, others = rest[0], rest[1:]
        for singles, pairs in rec(others):
            yield [first] + singles, pairs
        for k, other in enumerate(others):
            remaining = others[:k] + others[k + 1 :]
            for singles, pairs in rec(remaining):
                yield singles, [(first, other)] + pairs

    return list(rec(positions))


def kernel_eval(spec: KernelSpec, x, gamma=None) -> np.ndarray:
    """Partial derivative ``K^(gamma)`` at one point or an array of points.

    ``gamma`` is a multi-index of length d (defaults to zero). Points on or
    outside the unit sphere give exactly 0.
    """
    x = np.asarray(x, dtype=float)
    if gamma is None:
        gamma = (0,) * spec.d
    gamma = tuple(int(g) for g in gamma)
    if len(gamma) != spec.d or min(gamma) < 0:
        raise ValueError("gamma must be a length-d tuple of non-negative integers")
    order = sum(gamma)
    if order > MAX_ORDER:
        raise UnsupportedOrderError(f"derivative order {order} > {MAX_ORDER}")
    idx = tuple(i for i, g in enumerate(gamma) for _ in range(g))
    s = np.sum(x * x, axis=-1)
    phis = _phi_derivs(spec, s, order)
    total = np.zeros_like(s)
    for singles, pairs in _matchings(idx):
        if any(idx[a] != idx[b] for a, b in pairs):
            continue
        term = phis[len(singles) + len(pairs)] * 2.0 ** (len(singles) + len(pairs))
        for a in singles:
            term = term * x[..., idx[a]]
        total = total + term
    return np.where(s < 1.0, total, 0.0)


def kernel_tensors(spec: KernelSpec, u: np.ndarray, max_order: int) -> list[np.ndarray]:
    """Value, gradient, Hessian, ... of K at points ``u`` (shape (N, d)).

    Returns full symmetric derivative tensors up to ``max_order`` (at least 2).
    """
    if max_order > MAX_ORDER:
        raise UnsupportedOrderError(f"derivative order {max_order} > {MAX_ORDER}")
    max_order = max(max_order, 2)
    u = np.asarray(u, dtype=float)
    d = u.shape[-1]
    s = np.sum(u * u, axis=-1)
    inside = s < 1.0
    ph = _phi_derivs(spec, s, max_order)
    ph = [np.where(inside, p_, 0.0) for p_ in ph]
    eye = np.eye(d)
    out = [ph[0], 2.0 * ph[1][:, None] * u]
    uu = u[:, :, None] * u[:, None, :]
    out.append(4.0 * ph[2][:, None, None] * uu + 2.0 * ph[1][:, None, None] * eye)
    if max_order >= 3:
        uuu = uu[:, :, :, None] * u[:, None, None, :]
        du = eye[None, :, :, None] * u[:, None, None, :]
        sym = du + np.swapaxes(du, 2, 3) + np.moveaxis(du, 3, 1)
        out.append(8.0 * ph[3][:, None, None, None] * uuu + 4.0 * ph[2][:, None, None, None] * sym)
    if max_order >= 4:
        uuuu = uuu[..., None] * u[:, None, None, None, :]
        # delta_ij u_k u_l over the 6 ways to pick the delta pair
        duu = eye[None, :, :, None, None] * uu[:, None, None, :, :]
        sym2 = (
            duu
            + np.einsum("nikjl->nijkl", duu)
            + np.einsum("niljk->nijkl", duu)
            + np.einsum("njkil->nijkl", duu)
            + np.einsum("njlik->nijkl", duu)
            + np.einsum("nklij->nijkl", duu)
        )
        dd = (
            np.einsum("ij,kl->ijkl", eye, eye)
            + np.einsum("ik,jl->ijkl", eye, eye)
            + np.einsum("il,jk->ijkl", eye, eye)
        )
        out.append(
            16.0 * ph[4][:, None, None, None, None] * uuuu
            + 8.0 * ph[3][:, None, None, None, None] * sym2
            + 4.0 * ph[2][:, None, None, None, None] * dd[None]
        )
    return out


def _unit(d: int, *pos: int) -> tuple:
    g = [0] * d
    for p_ in pos:
        g[p_] += 1
    return tuple(g)


@lru_cache(maxsize=32)
def _rule(d: int, level: int):
    return ball_rule(d, level)


def ball_integral(spec: KernelSpec, fn, level: int = 12):
    """Integrate ``fn(nodes)`` over the unit ball with the product rule."""
    nodes, weights = _rule(spec.d, level)
    vals = fn(nodes)
    return np.tensordot(weights, vals, axes=(0, 0))


def cube_integral(spec: KernelSpec, fn, panels: int = 32, order: int = 4):
    """Integrate over [-1, 1]^d with a composite Gauss rule (independent check)."""
    total = 0.0
    for nodes, weights in cube_rule(spec.d, panels, order):
        inside = np.sum(nodes * nodes, axis=1) < 1.0
        if not inside.any():
            continue
        total = total + np.tensordot(weights[inside], fn(nodes[inside]), axes=(0, 0))
    return total


@dataclass(frozen=True)
class KernelConstants:
    """Scalars and matrices derived from the kernel.

    ``R`` is indexed in ``vech`` order. ``b_K`` is None when d == 2.
    ``k3_margin`` is ``a_K - 1`` (d = 2) or ``a_K b_K - 1`` (d >= 3).
    """

    d: int
    exponent: int
    a_K: float
    b_K: float | None
    mu_K: float
    R: np.ndarray
    rho1_sq: float
    rho2_sq: float
    rho3_sq: float | None
    k3_margin: float
    k3_satisfied: bool
    warning: str | None = None

    def as_dict(self) -> dict:
        return {
            "d": self.d,
            "exponent": self.exponent,
            "a_K": self.a_K,
            "b_K": self.b_K,
            "mu_K": self.mu_K,
            "rho2_sq": self.rho2_sq,
            "R": self.R.tolist(),
            "k3_margin": self.k3_margin,
            "k3_satisfied": self.k3_satisfied,
        }


def _square_integral(spec, gamma, level):
    return float(ball_integral(spec, lambda u: kernel_eval(spec, u, gamma) ** 2, level))


@lru_cache(maxsize=32)
def kernel_constants(spec: KernelSpec, quad_level: int = 12) -> KernelConstants:
    """Compute a_K, b_K, mu_K, R and the squared-derivative integrals.

    ``R`` is assembled entry by entry; entries whose combined multi-index has
    an odd component vanish by symmetry and are set to 0 without quadrature.
    """
    if quad_level < 1:
        raise ValueError("quadrature level must be positive")
    d = spec.d
    rho1 = _unit(d, 0, 0, 0)
    rho2 = _unit(d, 0, 0, 1)
    r1 = _square_integral(spec, rho1, quad_level)
    r2 = _square_integral(spec, rho2, quad_level)
    a_K = r1 / r2
    b_K = r3 = None
    if d >= 3:
        r3 = _square_integral(spec, _unit(d, 0, 1, 2), quad_level)
        b_K = r3 / r2
    mu_K = float(ball_integral(spec, lambda u: u[:, 0] ** 2 * kernel_eval(spec, u), quad_level))

    pairs = vech_pairs(d)
    m = len(pairs)
    nodes, weights = _rule(d, quad_level)
    second = {pq: kernel_eval(spec, nodes, _unit(d, *pq)) for pq in pairs}
    R = np.zeros((m, m))
    for a, pa in enumerate(pairs):
        for b in range(a, m):
            combined = np.array(_unit(d, *pa)) + np.array(_unit(d, *pairs[b]))
            if np.any(combined % 2):
                continue
            R[a, b] = R[b, a] = weights @ (second[pa] * second[pairs[b]])
    R.setflags(write=False)

    margin = a_K - 1.0 if d == 2 else a_K * b_K - 1.0
    warning = None
    if margin <= 0:
        warning = (
            f"K3 violated for d={d}, p={spec.exponent}: margin {margin:.3g} <= 0"
        )
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    return KernelConstants(
        d, spec.exponent, a_K, b_K, mu_K, R, r1, r2, r3, margin, margin > 0, warning
    )


def omega_quadrature(spec: KernelSpec, maps: IndexMaps, A, level: int = 12) -> np.ndarray:
    """Omega = int (grad d2K)^T A A^T (grad d2K) du by direct quadrature.

    ``A`` has shape (..., d(d+1)/2); the result has shape (..., d, d).
    """
    A = np.asarray(A, dtype=float)
    nodes, weights = _rule(spec.d, level)
    t3 = kernel_tensors(spec, nodes, 3)[3]
    # g[n, i, k] = d/du_i of the k-th vech entry of the Hessian of K
    g = vech(t3)
    proj = np.einsum("nik,...k->...ni", g, A)
    return np.einsum("n,...ni,...nj->...ij", weights, proj, proj)


def _p_general(t: np.ndarray, a_K: float, b_K: float, maps: IndexMaps) -> np.ndarray:
    """Closed-form P(t) for dvech-ordered coefficients ``t`` (..., m)."""
    d = maps.d
    b = 1.0 if b_K is None else b_K
    P = np.zeros(t.shape[:-1] + (d, d))
    off = range(d, maps.m)
    for i in range(d):
        acc = 0.0
        for k1 in range(d):
            for k2 in range(d):
                di1, di2, d12 = k1 == i, k2 == i, k1 == k2
                coef = (a_K if (di1 and di2) else 1.0) * (
                    b if ((not di1) and (not di2) and (not d12)) else 1.0
                )
                acc = acc + coef * t[..., k1] * t[..., k2]
        for k in off:
            coef = 1.0 if i in maps.pi_map[k] else b
            acc = acc + coef * t[..., k] ** 2
        P[..., i, i] = acc
    for i in range(d):
        for j in range(i + 1, d):
            kij = maps.offdiag_index(i, j)
            acc = 0.0
            for k in range(d):
                coef = 1.0 if k in (i, j) else b
                acc = acc + 2.0 * coef * t[..., k] * t[..., kij]
            for k1 in off:
                for k2 in off:
                    sd = set(maps.pi_map[k1]) ^ set(maps.pi_map[k2])
                    if sd == {i, j}:
                        acc = acc + b * t[..., k1] * t[..., k2]
            P[..., i, j] = P[..., j, i] = acc
    return P


def p_matrix_d2(t_vech: np.ndarray, a_K: float) -> np.ndarray:
    """Four-term d = 2 form of P with ``t`` in vech order (t11, t21, t22)."""
    t1, t2, t3 = t_vech[..., 0], t_vech[..., 1], t_vech[..., 2]
    P = np.empty(t_vech.shape[:-1] + (2, 2))
    P[..., 0, 0] = a_K * t1**2 + t2**2 + t3**2 + 2 * t1 * t3
    P[..., 0, 1] = P[..., 1, 0] = 2 * t1 * t2 + 2 * t2 * t3
    P[..., 1, 1] = a_K * t3**2 + t2**2 + t1**2 + 2 * t1 * t3
    return P


def omega_coefficients(maps: IndexMaps, A) -> np.ndarray:
    """Row vector t = A^T Q^{-1}, i.e. A re-expressed in dvech order."""
    A = np.asarray(A, dtype=float)
    return A @ np.linalg.inv(maps.reorder)


def omega_closed_form(consts: KernelConstants, maps: IndexMaps, A) -> np.ndarray:
    """Omega = rho2_sq * P(t) without quadrature."""
    t = omega_coefficients(maps, A)
    return consts.rho2_sq * _p_general(t, consts.a_K, consts.b_K, maps)


def p_matrix(consts: KernelConstants, maps: IndexMaps, t: np.ndarray) -> np.ndarray:
    return _p_general(np.asarray(t, dtype=float), consts.a_K, consts.b_K, maps)


def p_decomposition(t: np.ndarray, a_K: float, b_K: float, maps: IndexMaps):
    """Factors ``L`` and ``S`` with P = L L^T + S for d >= 3.

    ``t`` is a single dvech-ordered vector. Returns (L, S).
    """
    d = maps.d
    t = np.asarray(t, dtype=float)
    sb, sc = math.sqrt(b_K), math.sqrt(1.0 - b_K)
    L1 = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            if i == j:
                L1[i, i] = t[i] / sb + sb * (t[:d].sum() - t[i])
            else:
                L1[i, j] = sb * t[maps.offdiag_index(i, j)]
    cols2 = []
    for j1 in range(d):
        for j2 in range(j1 + 1, d):
            for j3 in range(j2 + 1, d):
                v = np.zeros(d)
                v[j1] = sb * t[maps.offdiag_index(j2, j3)]
                v[j2] = sb * t[maps.offdiag_index(j1, j3)]
                v[j3] = sb * t[maps.offdiag_index(j1, j2)]
                cols2.append(v)
    cols3 = []
    for j1 in range(d):
        for j2 in range(j1 + 1, d):
            k = maps.offdiag_index(j1, j2)
            v1 = np.zeros(d)
            v2 = np.zeros(d)
            v1[j1], v1[j2] = sc * t[j2], sc * t[k]
            v2[j1], v2[j2] = sc * t[k], sc * t[j1]
            cols3 += [v1, v2]
    L2 = np.column_stack(cols2) if cols2 else np.zeros((d, 0))
    L3 = np.column_stack(cols3)
    S = (a_K - 1.0 / b_K) * np.diag(t[:d] ** 2)
    return np.hstack([L1, L2, L3]), S


def default_maps(spec: KernelSpec) -> IndexMaps:
    return build_index_maps(spec.d)
