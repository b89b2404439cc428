"""Gaussian-mixture ground truth: exact derivatives, sampling, smoothed density."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .derivs import DerivPack
from .errors import UnsupportedOrderError
from .kernel import KernelSpec, _rule, kernel_eval, kernel_tensors


@dataclass(frozen=True)
class Component:
    weight: float
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class DensityModel:
    """Finite Gaussian mixture together with the box it is studied on."""

    components: tuple
    domain_box: np.ndarray  # shape (d, 2): per-axis [lo, hi]
    _prec: tuple = field(init=False, repr=False, compare=False)
    _norm: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        comps = tuple(
            Component(float(c.weight), np.asarray(c.mean, float), np.asarray(c.cov, float))
            for c in self.components
        )
        if not comps:
            raise ValueError("mixture needs at least one component")
        d = comps[0].mean.shape[0]
        w = np.array([c.weight for c in comps])
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to 1")
        for c in comps:
            if c.mean.shape != (d,) or c.cov.shape != (d, d):
                raise ValueError("inconsistent component dimensions")
            if not np.allclose(c.cov, c.cov.T) or np.linalg.eigvalsh(c.cov).min() <= 0:
                raise ValueError("component covariance must be symmetric positive definite")
        box = np.asarray(self.domain_box, float).reshape(d, 2)
        if np.any(box[:, 1] <= box[:, 0]):
            raise ValueError("domain box needs lo < hi on every axis")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "domain_box", box)
        prec = tuple(np.linalg.inv(c.cov) for c in comps)
        norm = np.array(
            [c.weight / np.sqrt((2 * np.pi) ** d * np.linalg.det(c.cov)) for c in comps]
        )
        object.__setattr__(self, "_prec", prec)
        object.__setattr__(self, "_norm", norm)

    @property
    def d(self) -> int:
        return self.components[0].mean.shape[0]

    def in_box(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        return np.all((x >= self.domain_box[:, 0]) & (x <= self.domain_box[:, 1]), axis=-1)

    @classmethod
    def from_dict(cls, data: dict) -> "DensityModel":
        comps = [Component(c["weight"], c["mean"], c["cov"]) for c in data["components"]]
        return cls(tuple(comps), np.asarray(data["domain_box"], float))

    def to_dict(self) -> dict:
        return {
            "components": [
                {"weight": c.weight, "mean": c.mean.tolist(), "cov": c.cov.tolist()}
                for c in self.components
            ],
            "domain_box": self.domain_box.tolist(),
        }


def gaussian(mean, cov, box) -> DensityModel:
    return DensityModel((Component(1.0, mean, cov),), np.asarray(box, float))


@dataclass(frozen=True)
class SampleSet:
    points: np.ndarray
    seed: int | None = None
    model_id: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or len(pts) < 1:
            raise ValueError("a sample needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("sample points must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


def model_derivs(model: DensityModel, x, max_order: int = 2) -> DerivPack:
    """Exact derivatives of the mixture density (Hermite-type recursion).

    ``x`` may be a single point or an (N, d) array. Orders below 2 are
    computed anyway, so the pack always carries the Hessian.
    """
    if max_order > 4:
        raise UnsupportedOrderError("model derivatives are available up to order 4")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    n, d = X.shape
    eye_terms = max(max_order, 2)
    val = np.zeros(n)
    grad = np.zeros((n, d))
    hess = np.zeros((n, d, d))
    third = np.zeros((n, d, d, d)) if eye_terms >= 3 else None
    fourth = np.zeros((n, d, d, d, d)) if eye_terms >= 4 else None
    for comp, P, c in zip(model.components, model._prec, model._norm):
        diff = X - comp.mean
        y = diff @ P
        phi = c * np.exp(-0.5 * np.einsum("ni,ni->n", diff, y))
        val += phi
        grad += -y * phi[:, None]
        yy = y[:, :, None] * y[:, None, :]
        hess += (yy - P) * phi[:, None, None]
        if third is not None:
            yyy = yy[..., None] * y[:, None, None, :]
            py = P[None, :, :, None] * y[:, None, None, :]
            sym = py + np.swapaxes(py, 2, 3) + np.moveaxis(py, 3, 1)
            third += (-yyy + sym) * phi[:, None, None, None]
        if fourth is not None:
            yyyy = yyy[..., None] * y[:, None, None, None, :]
            pyy = P[None, :, :, None, None] * yy[:, None, None, :, :]
            sym2 = (
                pyy
                + np.einsum("nikjl->nijkl", pyy)
                + np.einsum("niljk->nijkl", pyy)
                + np.einsum("njkil->nijkl", pyy)
                + np.einsum("njlik->nijkl", pyy)
                + np.einsum("nklij->nijkl", pyy)
            )
            pp = (
                np.einsum("ij,kl->ijkl", P, P)
                + np.einsum("ik,jl->ijkl", P, P)
                + np.einsum("il,jk->ijkl", P, P)
            )
            fourth += (yyyy - sym2 + pp[None]) * phi[:, None, None, None, None]
    pack = DerivPack(val, grad, hess, third, fourth)
    return pack[0] if single else pack


def sample(model: DensityModel, n: int, seed: int | None = None, model_id: str = "") -> SampleSet:
    """Draw ``n`` i.i.d. points: pick a component, then a Gaussian draw."""
    if n < 1:
        raise ValueError("sample size must be at least 1")
    rng = np.random.default_rng(seed)
    w = np.array([c.weight for c in model.components])
    labels = rng.choice(len(w), size=n, p=w)
    pts = np.empty((n, model.d))
    for k, comp in enumerate(model.components):
        idx = np.flatnonzero(labels == k)
        if len(idx):
            pts[idx] = rng.multivariate_normal(comp.mean, comp.cov, size=len(idx))
    return SampleSet(pts, seed, model_id)


def smoothed_derivs(
    model: DensityModel,
    spec: KernelSpec,
    h: float,
    x,
    max_order: int = 2,
    level: int = 16,
) -> DerivPack:
    """Derivatives of f_h = E f_hat, i.e. f_h^(g)(x) = int K(u) f^(g)(x - h u) du.

    The integral runs over the kernel's unit ball with the product rule.
    """
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    nodes, weights = _rule(spec.d, level)
    kw = weights * kernel_eval(spec, nodes)
    n, d = X.shape
    pts = (X[:, None, :] - h * nodes[None, :, :]).reshape(-1, d)
    pack = model_derivs(model, pts, max_order)
    tens = []
    for t in pack.tensors():
        t = t.reshape((n, len(kw)) + t.shape[1:])
        tens.append(np.tensordot(kw, t, axes=(0, 1)))
    out = DerivPack.from_tensors(tens)
    return out[0] if single else out


def smoothed_derivs_by_parts(
    model: DensityModel, spec: KernelSpec, h: float, x, max_order: int = 2, level: int = 16
) -> DerivPack:
    """Same quantity with the derivative moved onto the kernel:
    f_h^(g)(x) = h^{-|g|} int K^(g)(u) f(x - h u) du.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    nodes, weights = _rule(spec.d, level)
    ktens = kernel_tensors(spec, nodes, max_order)
    n, d = X.shape
    pts = (X[:, None, :] - h * nodes[None, :, :]).reshape(-1, d)
    fvals = model_derivs(model, pts, 0).value.reshape(n, -1) * weights[None, :]
    tens = [np.tensordot(fvals, kt, axes=(1, 0)) / h**k for k, kt in enumerate(ktens)]
    out = DerivPack.from_tensors(tens)
    return out[0] if single else out


def true_ridge(model: DensityModel, r: int, spacing: float, spec: KernelSpec | None = None,
               h: float | None = None, **kwargs):
    """Ridge of f (``h is None``) or of the smoothed density f_h.

    Seeds on a grid of the given spacing over the model's domain box and runs
    the subspace-constrained solver on exact derivatives. Extra keyword
    arguments go to :func:`ridgeconf.ridge.trace_ridge`.
    """
    from .ridge import seed_grid, trace_ridge

    if h is None:
        def pack_fn(x):
            return model_derivs(model, x, 2)
    else:
        if spec is None:
            raise ValueError("the smoothed ridge needs a kernel spec")

        def pack_fn(x):
            return smoothed_derivs(model, spec, h, x, 2)

    seeds = seed_grid(model.domain_box, spacing)
    return trace_ridge(pack_fn, seeds, r, box=model.domain_box, resolution=spacing, **kwargs)
