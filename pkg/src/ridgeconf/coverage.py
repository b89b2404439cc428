"""Monte Carlo coverage and Gumbel-limit experiments."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .confidence import (
    RegionParams,
    b_h_to_z,
    build_region,
    c_hat_surface_integral,
    d_statistic,
    z_alpha,
)
from .density import DensityModel, model_derivs, sample, smoothed_derivs
from .errors import EmptyRidgeError
from .geometry import ridge_stats
from .indexing import build_index_maps
from .kde import KernelDensity
from .kernel import KernelSpec, kernel_constants
from .ridge import RidgeSet, densify, link_polyline, trace_ridge, seed_grid

WILSON_Z = 1.959963984540054


def wilson_interval(k: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    """Wilson score interval for k successes out of n."""
    if n < 1:
        raise ValueError("need at least one trial")
    p = k / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z / den * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    # clamp so rounding at k = 0 or k = n never leaves p outside its interval
    return max(0.0, min(p, centre - half)), min(1.0, max(p, centre + half))


def replicate_seed(master: int, i: int) -> int:
    """Seed of replicate i, independent of the order replicates run in."""
    return int(np.random.SeedSequence(master, spawn_key=(i,)).generate_state(1, np.uint64)[0])


@dataclass
class ExperimentPlan:
    model: DensityModel
    params: RegionParams
    replicates: int
    probe_resolution: float
    seed: int = 0
    spec: KernelSpec | None = None
    seed_spacing: float | None = None  # seeds for the per-replicate ridge searches
    oracle_spacing: float = 0.05  # seeds for the oracle ridge
    checks: tuple = ("coverage_mh",)

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("need at least one replicate")
        if self.probe_resolution <= 0:
            raise ValueError("probe resolution must be positive")
        if self.spec is None:
            self.spec = KernelSpec(self.params.d)

    @property
    def box(self) -> np.ndarray:
        return self.model.domain_box


@dataclass
class CoverageReport:
    covered_count: int
    B: int
    alpha: float
    sup_stats: np.ndarray
    covered: np.ndarray
    a_n: np.ndarray
    c_hat: np.ndarray
    runtime: float
    probe_count: int
    probe_spacing: float
    extra: dict = field(default_factory=dict)

    @property
    def empirical(self) -> float:
        return self.covered_count / self.B

    @property
    def wilson_interval(self) -> tuple[float, float]:
        return wilson_interval(self.covered_count, self.B)

    def to_dict(self) -> dict:
        lo, hi = self.wilson_interval
        return {
            "alpha": self.alpha,
            "covered_count": self.covered_count,
            "B": self.B,
            "empirical": self.empirical,
            "wilson_interval": [lo, hi],
            "runtime_seconds": self.runtime,
            "probe_count": self.probe_count,
            "probe_spacing": self.probe_spacing,
            **self.extra,
        }


def oracle_ridge(plan: ExperimentPlan, smoothed: bool = True) -> RidgeSet:
    """Densified ridge of f_h (``smoothed``) or of f, with f_h / f diagnostics."""
    m, spec, p = plan.model, plan.spec, plan.params
    if smoothed:
        def pack_fn(x):
            return smoothed_derivs(m, spec, p.h, x, 2)
    else:
        def pack_fn(x):
            return model_derivs(m, x, 2)
    seeds = seed_grid(m.domain_box, plan.oracle_spacing)
    f0 = pack_fn(seeds).value
    seeds = seeds[f0 > 1e-3 * f0.max()]
    coarse = trace_ridge(pack_fn, seeds, p.r, box=m.domain_box, resolution=plan.oracle_spacing,
                         step_scale=plan.oracle_spacing * 4)
    if coarse.empty:
        raise EmptyRidgeError("oracle ridge is empty")
    if p.r == 1:
        link_polyline(coarse)
        fine = densify(coarse, pack_fn, plan.probe_resolution, box=m.domain_box,
                       step_scale=plan.oracle_spacing * 4)
        link_polyline(fine)
    else:
        fine = coarse
    if fine.empty:
        raise EmptyRidgeError("oracle ridge is empty")
    fine.diagnostics = ridge_stats(pack_fn(fine.points), p.r, kernel_constants(spec),
                                   build_index_maps(spec.d))
    return fine


def run_coverage(
    plan: ExperimentPlan,
    alphas=None,
    target_ridge: RidgeSet | None = None,
    a_n_override: float | None = None,
    progress=None,
) -> list[CoverageReport]:
    """Coverage of the oracle ridge by the plan's region, one report per alpha.

    All levels share the replicate samples and fields, so coverage is
    monotone in alpha replicate by replicate. A miss at any probe point is a
    miss for the replicate.
    """
    p = plan.params
    alphas = (p.alpha,) if alphas is None else tuple(alphas)
    if target_ridge is None:
        target_ridge = oracle_ridge(plan, smoothed=(p.target == "mh"))
    if target_ridge.empty:
        raise EmptyRidgeError("oracle ridge is empty")
    probe = target_ridge.points
    box = plan.box
    seeds = plan.seed_spacing
    t0 = time.perf_counter()
    covered = np.zeros((len(alphas), plan.replicates), bool)
    sups = np.zeros(plan.replicates)
    a_ns = np.zeros((len(alphas), plan.replicates))
    c_hats = np.zeros(plan.replicates)
    for i in range(plan.replicates):
        smp = sample(plan.model, p.n, replicate_seed(plan.seed, i), "replicate")
        region = build_region(smp, plan.spec, p, None, box=box, seeds=seeds, a_n_override=a_n_override)
        f = region.evaluator.fields(probe)
        sups[i] = f["stat"].max()
        c_hats[i] = region.aux["c_hat"] if region.aux["c_hat"] is not None else np.nan
        for k, a in enumerate(alphas):
            reg = region if a_n_override is not None else region.with_alpha(a)
            covered[k, i] = bool(np.all(reg.membership(f["stat"], f["lam"], f["gradnorm"])))
            a_ns[k, i] = reg.a_n
        if progress is not None:
            progress(i, covered[:, i])
    runtime = time.perf_counter() - t0
    return [
        CoverageReport(
            int(covered[k].sum()), plan.replicates, a, sups, covered[k], a_ns[k], c_hats, runtime,
            len(probe), plan.probe_resolution, {"target": p.target},
        )
        for k, a in enumerate(alphas)
    ]


@dataclass
class GumbelReport:
    ks_distance: float
    z: np.ndarray
    sup_stats: np.ndarray
    c_oracle: float
    runtime: float

    def to_dict(self) -> dict:
        return {
            "ks_distance": self.ks_distance,
            "c_oracle": self.c_oracle,
            "B": int(len(self.z)),
            "runtime_seconds": self.runtime,
        }


def gumbel_ks(z) -> float:
    """KS distance of a sample from the standard Gumbel law exp(-exp(-z))."""
    return float(stats.kstest(np.asarray(z, float), stats.gumbel_r.cdf).statistic)


def run_gumbel_check(plan: ExperimentPlan, target_ridge: RidgeSet | None = None) -> GumbelReport:
    """Standardized sup of sqrt(n h^{d+4}) D_n over the oracle M_h against Gumbel."""
    p, spec = plan.params, plan.spec
    rs = oracle_ridge(plan, smoothed=True) if target_ridge is None else target_ridge
    consts = kernel_constants(spec)
    maps = build_index_maps(spec.d)
    c_oracle = c_hat_surface_integral(rs, consts, maps)
    pack_h = smoothed_derivs(plan.model, spec, p.h, rs.points, 2)
    t0 = time.perf_counter()
    sups = np.zeros(plan.replicates)
    for i in range(plan.replicates):
        smp = sample(plan.model, p.n, replicate_seed(plan.seed, i), "replicate")
        pk = KernelDensity(smp, spec, p.h).pack(rs.points, 2)
        sups[i] = p.scale * d_statistic(pk, pack_h, p.r, consts, maps).max()
    z = b_h_to_z(sups, c_oracle, p.h, p.r, p.d)
    return GumbelReport(gumbel_ks(z), z, sups, c_oracle, time.perf_counter() - t0)
