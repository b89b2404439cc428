"""Confidence regions for density ridges.

A cell x belongs to the region when the standardized vertical deviation
sqrt(n h^{d+4}) B_n(x) is at most a_n = b_h(z_alpha, c_hat) and the
eigenvalue lambda_{r+1}(x) is below b_n. Optional pieces: explicit bias
correction with an auxiliary bandwidth l, data-driven caps zeta0 / zeta for
b_n, and a union with small-gradient sets that covers critical points.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .density import SampleSet
from .derivs import DerivPack
from .errors import DegenerateFrameError, EmptyRidgeError
from .geometry import EigenFrame, _check_r, _inv_sqrt_regularized, _m_matrix, ordered_eigen, ridge_stats
from .indexing import IndexMaps, build_index_maps, vech
from .kde import EvalGrid, KernelDensity, gamma_rate
from .kernel import KernelConstants, KernelSpec, kernel_constants, omega_closed_form
from .quadrature import sphere_rule
from .ridge import RidgeSet, find_ridge, surface_weights

TARGETS = ("mh", "m-undersmooth", "m-biascorr")
BN_MODES = ("zero", "zeta0", "zeta")


def z_alpha(alpha: float) -> float:
    """Gumbel quantile: exp(-exp(-z)) = 1 - alpha."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return -math.log(-math.log1p(-alpha))


def _root(h: float, r: int) -> float:
    if not 0 < h < 1:
        raise ValueError("b_h needs 0 < h < 1 so that log(1/h) > 0")
    return math.sqrt(2.0 * r * math.log(1.0 / h))


def b_h_threshold(z, c, h: float, r: int, d: int):
    """b_h(z, c) = z/s + s + [(d-2)/2 log log(1/h) + c]/s with s = sqrt(2 r log(1/h))."""
    s = _root(h, r)
    loglog = math.log(math.log(1.0 / h)) if d != 2 else 0.0
    return np.asarray(z) / s + s + (0.5 * (d - 2) * loglog + np.asarray(c)) / s


def b_h_to_z(t, c, h: float, r: int, d: int):
    """Inverse of b_h in z: the Gumbel-scale value of a threshold t."""
    s = _root(h, r)
    return s * (np.asarray(t) - b_h_threshold(0.0, c, h, r, d))


@dataclass(frozen=True)
class RegionParams:
    alpha: float
    n: int
    d: int
    r: int
    h: float
    l: float | None = None
    bn_mode: str = "zero"
    combined: bool = False
    eta: float = 0.5
    mu_exponent: float = 0.5
    nu_exponent: float = 0.5
    target: str = "mh"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        _check_r(self.r, self.d)
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        if self.bn_mode not in BN_MODES:
            raise ValueError(f"bn_mode must be one of {BN_MODES}")
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}")
        if self.h <= 0 or self.n < 1:
            raise ValueError("need h > 0 and n >= 1")
        if self.target == "m-biascorr" and self.l is None:
            raise ValueError("bias correction needs the auxiliary bandwidth l")
        if self.mu_exponent <= 0 or self.nu_exponent <= 0:
            raise ValueError("mu and nu exponents must be positive")

    @property
    def mu_n(self) -> float:
        return self.h ** (-self.mu_exponent)

    @property
    def nu_n(self) -> float:
        return self.h ** (-self.nu_exponent)

    @property
    def scale(self) -> float:
        """sqrt(n h^{d+4})."""
        return math.sqrt(self.n * self.h ** (self.d + 4))

    def gamma(self, k: int) -> float:
        return gamma_rate(self.n, self.h, self.d, k)

    def e_threshold(self) -> float:
        """mu_n gamma^(1) + h^eta, the gradient cut defining E_{n,eta}."""
        return self.mu_n * self.gamma(1) + self.h**self.eta

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def beta_hat(pack_l: DerivPack, frame: EigenFrame, r: int, maps: IndexMaps, check: bool = True):
    """Leading bias coefficient M^T vech(Lap d2f) + V^T Lap grad f from an l-pack."""
    if pack_l.fourth is None:
        raise ValueError("bias estimation needs derivatives up to order 4")
    M, gap = _m_matrix(pack_l.grad, frame.eigenvalues, frame.eigenvectors, r, maps)
    if check and np.any(gap <= frame.tol):
        raise DegenerateFrameError("eigengap lambda_r - lambda_{r+1} is below tolerance")
    lap_h = pack_l.laplacian_hess()
    lap_g = pack_l.laplacian_grad()
    V = frame.normal_basis(r)
    return np.einsum("...ki,...k->...i", M, vech(lap_h)) + np.einsum("...ki,...k->...i", V, lap_g)


def c_hat_surface_integral(
    rs: RidgeSet,
    consts: KernelConstants,
    maps: IndexMaps,
    restrict=None,
    sphere_level: int = 8,
    weights=None,
    density_scaled: bool = True,
    omega=None,
) -> float:
    """log{ r^{(d-2)/2} / (2 pi^{d/2}) * sum_z sum_x w_z w_x ||Omega(x,z)^{1/2} Lambda_x||_r }.

    ``rs`` needs diagnostics (M and Q at each point); Omega comes from the
    closed form with A(x, z) = M(x) Q(x) z. ||.||_r is sqrt(det(L^T Omega L))
    by Cauchy-Binet. ``restrict`` is a boolean mask over the ridge points.

    With ``density_scaled`` (default) the local covariance matrix is
    f(x) Omega(x, z): the second-order term of the field's correlation
    carries the density just like its variance does. ``density_scaled=False``
    integrates Omega alone. ``omega`` (shape (d, d) or per point / node)
    replaces the local matrix outright.
    """
    if rs.empty:
        raise EmptyRidgeError("the ridge set is empty")
    if rs.diagnostics is None:
        raise ValueError("ridge set carries no diagnostics")
    w = surface_weights(rs) if weights is None else np.asarray(weights, float)
    keep = np.ones(rs.m, bool) if restrict is None else np.asarray(restrict, bool)
    if not keep.any():
        raise EmptyRidgeError("no ridge points left after restriction")
    d, r = rs.d, rs.r
    zn, zw = sphere_rule(d - r, sphere_level)
    diag = rs.diagnostics
    MQ = np.einsum("nai,nij->naj", diag.M[keep], diag.Qn[keep])
    A = np.einsum("naj,zj->nza", MQ, zn)
    if omega is not None:
        omega = np.broadcast_to(np.asarray(omega, float), (len(A), len(zn), d, d))
    else:
        omega = omega_closed_form(consts, maps, A)
        if density_scaled:
            omega = omega * diag.density[keep][:, None, None, None]
    lam = rs.tangents[keep]
    G = np.einsum("nki,nzkl,nlj->nzij", lam, omega, lam)
    vol = np.sqrt(np.clip(np.linalg.det(G), 0.0, None))
    total = np.einsum("z,n,nz->", zw, w[keep], vol)
    if not total > 0:
        raise EmptyRidgeError("surface integral is zero")
    return float(math.log(r ** ((d - 2) / 2) / (2 * math.pi ** (d / 2)) * total))


def zeta_thresholds(ridge_hat: RidgeSet, params: RegionParams) -> dict:
    """zeta0 = [sup lambda + nu_n gamma2] ^ 0 and zeta = [sup lambda + nu_n (gamma2 + h^2)] ^ 0."""
    if ridge_hat.empty:
        raise EmptyRidgeError("the ridge set is empty")
    return zeta_from_sup(float(np.max(ridge_hat.lambda_rp1)), params)


def zeta_from_sup(sup_lambda: float, params: RegionParams) -> dict:
    g2 = params.gamma(2)
    nu = params.nu_n
    z0 = min(sup_lambda + nu * g2, 0.0)
    z1 = min(sup_lambda + nu * (g2 + params.h**2), 0.0)
    return {"zeta0": z0, "zeta": z1, "sup_lambda": sup_lambda}


class RegionEvaluator:
    """Pointwise region statistics at arbitrary points."""

    def __init__(self, sample: SampleSet, spec: KernelSpec, params: RegionParams, zero_bias: bool = False):
        self.sample = sample
        self.spec = spec
        self.params = params
        self.maps = build_index_maps(spec.d)
        self.consts = kernel_constants(spec)
        self.kd_h = KernelDensity(sample, spec, params.h)
        self.zero_bias = zero_bias
        self.kd_l = None
        if params.target == "m-biascorr":
            self.kd_l = KernelDensity(sample, spec, params.l)

    def fields(self, x, chunk: int = 2048, workers: int = 1) -> dict:
        X = np.atleast_2d(np.asarray(x, float))
        blocks = [X[i : i + chunk] for i in range(0, len(X), chunk)]
        if workers > 1 and len(blocks) > 1:
            with ThreadPoolExecutor(workers) as pool:
                parts = list(pool.map(self._fields, blocks))
        else:
            parts = [self._fields(b) for b in blocks]
        if not parts:
            return {k: np.zeros(0) for k in ("stat", "lam", "gradnorm", "near_critical")}
        return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}

    def _fields(self, X) -> dict:
        p = self.params
        pk = self.kd_h.pack(X, 2)
        diag = ridge_stats(pk, p.r, self.consts, self.maps)
        proj = diag.proj_grad
        if self.kd_l is not None and not self.zero_bias:
            pl = self.kd_l.pack(X, 4)
            frame_l = ordered_eigen(pl.hess, orientation_ref=diag.frame.eigenvectors)
            beta = beta_hat(pl, frame_l, p.r, self.maps, check=False)
            proj = proj - 0.5 * p.h**2 * self.consts.mu_K * beta
        stat = p.scale * np.linalg.norm(np.einsum("nij,nj->ni", diag.Qn, proj), axis=-1)
        # the regularized Q near critical points is for reporting only; those
        # cells can enter the region only through the small-gradient set
        stat = np.where(np.isfinite(stat) & ~diag.near_critical, stat, np.inf)
        return {
            "stat": stat,
            "lam": diag.lambda_rp1,
            "gradnorm": np.linalg.norm(pk.grad, axis=-1),
            "near_critical": diag.near_critical,
        }


@dataclass
class ConfidenceRegion:
    """Region thresholds plus, when a grid was given, per-cell fields and mask.

    Membership of arbitrary points is always decided pointwise through
    ``evaluator``; the grid fields exist for reporting and plotting.
    """

    grid: EvalGrid | None
    params: RegionParams
    hull: np.ndarray  # (d, 2) box of admissible probe points
    a_n: float
    b_n: float
    stat_field: np.ndarray | None = None
    lambda_field: np.ndarray | None = None
    gradnorm_field: np.ndarray | None = None
    mask: np.ndarray | None = None
    plain_mask: np.ndarray | None = None
    aux: dict = field(default_factory=dict)
    evaluator: RegionEvaluator | None = field(default=None, repr=False)

    def membership(self, stat, lam, gradnorm):
        """The region's defining inequalities for given statistic values."""
        inside = (stat <= self.a_n) & (lam < self.b_n)
        if self.params.combined:
            g = (gradnorm <= self.aux["e_threshold"]) & (lam < self.aux["g_threshold"])
            inside = inside | g
        return inside

    def _fill_masks(self):
        if self.stat_field is None:
            return
        self.plain_mask = (self.stat_field <= self.a_n) & (self.lambda_field < self.b_n)
        self.mask = self.membership(self.stat_field, self.lambda_field, self.gradnorm_field)

    def with_alpha(self, alpha: float) -> "ConfidenceRegion":
        """Same fields, threshold recomputed for another level."""
        p = replace(self.params, alpha=alpha)
        za = z_alpha(alpha)
        a_n = float(b_h_threshold(za, self.aux["c_hat"], p.h, p.r, p.d))
        out = replace(self, params=p, a_n=a_n, aux=dict(self.aux, z_alpha=za))
        out._fill_masks()
        return out

    def with_threshold(self, a_n: float) -> "ConfidenceRegion":
        out = replace(self, a_n=float(a_n))
        out._fill_masks()
        return out

    def summary(self) -> dict:
        return {
            "a_n": self.a_n,
            "b_n": self.b_n,
            "c_hat": self.aux.get("c_hat"),
            "z_alpha": self.aux.get("z_alpha"),
            "zeta0": self.aux.get("zeta0"),
            "zeta": self.aux.get("zeta"),
            "e_threshold": self.aux.get("e_threshold"),
            "g_threshold": self.aux.get("g_threshold"),
            "cells_in_region": None if self.mask is None else int(self.mask.sum()),
            "params": self.params.to_dict(),
        }


def estimate_c_hat(
    sample: SampleSet,
    spec: KernelSpec,
    bandwidth: float,
    r: int,
    box,
    seeds=None,
    e_gradient=None,
    sphere_level: int = 8,
    ridge: RidgeSet | None = None,
) -> tuple[float, RidgeSet]:
    """Plug-in c from the ridge of the KDE at ``bandwidth`` (normally l).

    ``e_gradient`` = (kde, threshold) drops ridge points inside E_{n,eta}.
    """
    rs = ridge if ridge is not None else find_ridge(sample, spec, bandwidth, r, seeds=seeds, box=box)
    if rs.empty:
        raise EmptyRidgeError("no ridge points found for c-hat")
    restrict = None
    if e_gradient is not None:
        kd, thr = e_gradient
        restrict = np.linalg.norm(kd.pack(rs.points, 2).grad, axis=-1) > thr
    maps = build_index_maps(spec.d)
    c = c_hat_surface_integral(rs, kernel_constants(spec), maps, restrict, sphere_level)
    return c, rs


def build_region(
    sample: SampleSet,
    spec: KernelSpec,
    params: RegionParams,
    grid: EvalGrid | None,
    ridge_hat: RidgeSet | None = None,
    c_hat: float | None = None,
    ridge_l: RidgeSet | None = None,
    a_n_override: float | None = None,
    zero_bias: bool = False,
    sphere_level: int = 8,
    box=None,
    seeds=None,
    workers: int = 1,
) -> ConfidenceRegion:
    """Assemble the region and, when ``grid`` is given, evaluate it on the grid.

    ``ridge_hat`` (the KDE ridge at h) is needed for the zeta modes and for
    the combined region; ``c_hat`` is computed from ``ridge_l`` (the KDE
    ridge at l, or at h when l is not given) unless supplied. Missing ridges
    are found with seeds over ``box`` (default: the grid hull).
    ``a_n_override`` replaces the threshold outright (e.g. +inf).
    """
    p = params
    if box is None:
        if grid is None:
            raise ValueError("need a grid or a box")
        box = np.array([[a[0], a[-1]] for a in grid.axes()])
    box = np.asarray(box, float)
    ev = RegionEvaluator(sample, spec, p, zero_bias=zero_bias)
    aux: dict = {"e_threshold": p.e_threshold(), "gamma1": p.gamma(1), "gamma2": p.gamma(2)}

    if p.bn_mode != "zero" or p.combined:
        if ridge_hat is None:
            ridge_hat = find_ridge(sample, spec, p.h, p.r, seeds=seeds, box=box, with_diagnostics=False)
        aux.update(zeta_thresholds(ridge_hat, p))

    if c_hat is None and a_n_override is None:
        bw = p.l if p.l is not None else p.h
        e_grad = (ev.kd_h, aux["e_threshold"]) if p.combined else None
        c_hat, _ = estimate_c_hat(sample, spec, bw, p.r, box, seeds=seeds, e_gradient=e_grad,
                                  sphere_level=sphere_level, ridge=ridge_l)
    aux["c_hat"] = c_hat
    aux["z_alpha"] = z_alpha(p.alpha)
    if a_n_override is not None:
        a_n = float(a_n_override)
    else:
        a_n = float(b_h_threshold(aux["z_alpha"], c_hat, p.h, p.r, p.d))
    b_n = {"zero": 0.0, "zeta0": aux.get("zeta0"), "zeta": aux.get("zeta")}[p.bn_mode]
    if p.combined:
        aux["g_threshold"] = aux["zeta0"] if p.target == "mh" else aux["zeta"]

    region = ConfidenceRegion(grid, p, box, a_n, float(b_n), aux=aux, evaluator=ev)
    if grid is not None:
        f = ev.fields(grid.points(), workers=workers)
        region.stat_field = f["stat"].reshape(grid.shape)
        region.lambda_field = f["lam"].reshape(grid.shape)
        region.gradnorm_field = f["gradnorm"].reshape(grid.shape)
        region._fill_masks()
    return region


@dataclass
class Containment:
    contained: bool
    inside: np.ndarray  # per-point membership (excluded points count as inside)
    excluded: np.ndarray  # per-point: outside the grid hull
    stat: np.ndarray
    lam: np.ndarray
    sup_stat: float
    sup_lambda: float


def contains_set(region: ConfidenceRegion, probe) -> Containment:
    """Check every probe point against the region's inequalities, evaluated
    exactly at the point (no grid interpolation)."""
    probe = np.atleast_2d(np.asarray(probe, float)).reshape(-1, region.hull.shape[0])
    box = region.hull
    excluded = ~np.all((probe >= box[:, 0]) & (probe <= box[:, 1]), axis=-1)
    pts = probe[~excluded]
    f = region.evaluator.fields(pts)
    ok = region.membership(f["stat"], f["lam"], f["gradnorm"])
    inside = np.ones(len(probe), bool)
    inside[~excluded] = ok
    stat = np.full(len(probe), np.nan)
    lam = np.full(len(probe), np.nan)
    stat[~excluded] = f["stat"]
    lam[~excluded] = f["lam"]
    sup_stat = float(f["stat"].max()) if len(pts) else -math.inf
    sup_lam = float(f["lam"].max()) if len(pts) else -math.inf
    return Containment(bool(inside.all()), inside, excluded, stat, lam, sup_stat, sup_lam)


def d_statistic(pack_hat: DerivPack, pack_h: DerivPack, r: int, consts: KernelConstants,
                maps: IndexMaps, frame_h: EigenFrame | None = None, check: bool = True):
    """||Q(x) M(x)^T (d2 f_hat - d2 f_h)|| with M, Q built from f_h."""
    frame = ordered_eigen(pack_h.hess) if frame_h is None else frame_h
    M, gap = _m_matrix(pack_h.grad, frame.eigenvalues, frame.eigenvectors, r, maps)
    if check and np.any(gap <= frame.tol):
        raise DegenerateFrameError("eigengap lambda_r - lambda_{r+1} is below tolerance")
    Sigma = np.einsum("...ai,ab,...bj->...ij", M, consts.R, M)
    Q, _ = _inv_sqrt_regularized(pack_h.value[..., None, None] * Sigma)
    diff = pack_hat.d2 - pack_h.d2
    return np.linalg.norm(np.einsum("...ij,...aj,...a->...i", Q, M, diff), axis=-1)
