import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import central_diff
from ridgeconf.density import SampleSet, sample, smoothed_derivs
from ridgeconf.errors import UnsupportedOrderError
from ridgeconf.kde import (
    Bandwidths,
    EvalGrid,
    KernelDensity,
    gamma_rate,
    kde_eval,
    kde_grid,
    kde_pack,
    rate_bandwidth,
)
from ridgeconf.kernel import kernel_eval


def test_single_point_at_center(spec2):
    s = SampleSet(np.zeros((1, 2)))
    assert kde_eval(s, spec2, 1.0, np.zeros(2)) == pytest.approx(6 / math.pi, rel=1e-14)


def test_matches_direct_sum(spec2, mixture2):
    s = sample(mixture2, 300, 1)
    x = np.array([[0.1, 0.2], [1.0, -0.3]])
    h = 0.7
    for gamma in [(0, 0), (1, 0), (0, 2), (2, 1), (1, 3)]:
        u = (x[:, None, :] - s.points[None]) / h
        want = kernel_eval(spec2, u.reshape(-1, 2), gamma).reshape(2, -1).sum(1) / (300 * h ** (2 + sum(gamma)))
        np.testing.assert_allclose(kde_eval(s, spec2, h, x, gamma), want, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("gamma", [(0, 0), (1, 0), (2, 2), (0, 3)])
def test_far_points_vanish(spec2, gamma):
    s = SampleSet(np.array([[0.0, 0.0], [0.3, 0.1]]))
    assert kde_eval(s, spec2, 0.5, np.array([2.0, 2.0]), gamma) == 0.0


def test_symmetric_gradient_at_single_point(spec2):
    s = SampleSet(np.array([[0.4, -0.2]]))
    np.testing.assert_array_equal(kde_pack(s, spec2, 0.5, np.array([0.4, -0.2]), 1).grad, 0.0)


def test_empty_contribution_pack_is_zero(spec2):
    s = SampleSet(np.array([[0.0, 0.0]]))
    pk = kde_pack(s, spec2, 0.5, np.array([[3.0, 3.0], [4.0, 0.0]]), 4)
    for t in pk.tensors():
        assert np.all(t == 0)


def test_grid_over_empty_region(spec2):
    s = SampleSet(np.array([[0.0, 0.0]]))
    g = EvalGrid([5.0, 5.0], 0.1, (4, 3))
    pk = kde_grid(s, spec2, 0.5, g, 2)
    assert pk.value.shape == (4, 3) and np.all(pk.value == 0) and np.all(pk.hess == 0)


def test_order_five_rejected(spec2):
    s = SampleSet(np.zeros((1, 2)))
    with pytest.raises(UnsupportedOrderError):
        kde_pack(s, spec2, 1.0, np.zeros(2), 5)


def test_derivatives_match_finite_differences(spec2, mixture2):
    s = sample(mixture2, 2000, 3)
    kd = KernelDensity(s, spec2, 0.8)
    x = np.random.default_rng(0).uniform(-1, 1, size=(50, 2))
    tens = kd.pack(x, 4).tensors()
    step = 1e-5
    for order in range(1, 5):
        fd = central_diff(lambda y: kd.pack(y, 4).tensors()[order - 1], x, step)
        err = np.abs(fd - tens[order]).reshape(50, -1).max(1)
        scale = np.abs(tens[order]).reshape(50, -1).max(1)
        assert np.all(err <= 1e-5 * scale)


def test_unbiased_for_smoothed_density(spec2, mixture2):
    x = np.array([[0.0, 0.0], [1.2, 0.4]])
    h = 0.6
    vals = np.array([kde_pack(sample(mixture2, 400, 1000 + i), spec2, h, x, 2).value for i in range(200)])
    want = smoothed_derivs(mixture2, spec2, h, x, 0).value
    se = vals.std(axis=0, ddof=1) / np.sqrt(len(vals))
    assert np.all(np.abs(vals.mean(axis=0) - want) < 3 * se)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 60), st.integers(1, 60), st.integers(0, 2**32 - 1))
def test_linearity_in_sample_union(n1, n2, seed):
    from ridgeconf.kernel import KernelSpec

    spec = KernelSpec(2)
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(n1, 2)), rng.normal(size=(n2, 2))
    x = rng.normal(size=(5, 2))
    fa = kde_pack(SampleSet(a), spec, 0.9, x, 3)
    fb = kde_pack(SampleSet(b), spec, 0.9, x, 3)
    fu = kde_pack(SampleSet(np.vstack([a, b])), spec, 0.9, x, 3)
    for ta, tb, tu in zip(fa.tensors(), fb.tensors(), fu.tensors()):
        np.testing.assert_allclose(tu, (n1 * ta + n2 * tb) / (n1 + n2), rtol=1e-12, atol=1e-12)


def test_grid_matches_pointwise_and_is_deterministic(spec2, mixture2):
    s = sample(mixture2, 1500, 4)
    g = EvalGrid.covering([[-1, 1], [-0.5, 0.5]], 0.1)
    kd = KernelDensity(s, spec2, 0.5)
    a = kd.grid(g, 2, workers=1)
    b = kd.grid(g, 2, workers=4, chunk=37)
    c = kd.pack(g.points(), 2)
    for ta, tb, tc in zip(a.tensors(), b.tensors(), c.tensors()):
        np.testing.assert_array_equal(ta, tb)
        np.testing.assert_array_equal(ta.reshape(tc.shape), tc)


def test_eval_matches_pack(spec2, mixture2):
    s = sample(mixture2, 800, 6)
    x = np.random.default_rng(1).uniform(-1, 1, size=(20, 2))
    kd = KernelDensity(s, spec2, 0.6)
    pk = kd.pack(x, 4)
    for gamma in [(0, 0), (0, 1), (1, 1), (2, 1), (2, 2)]:
        np.testing.assert_allclose(kd.eval(x, gamma), pk.derivative(gamma), rtol=1e-12, atol=1e-14)


def test_compensated_path_agrees(spec2, mixture2):
    s = sample(mixture2, 20_000, 8)
    kd = KernelDensity(s, spec2, 0.5)
    assert kd.compensated
    x = np.random.default_rng(2).uniform(-1, 1, size=(30, 2))
    got = kd.pack(x, 2).value
    u = (x[:, None, :] - s.points[None]) / 0.5
    k = kernel_eval(spec2, u.reshape(-1, 2)).reshape(30, -1)
    want = np.array([math.fsum(row) for row in k]) / (20_000 * 0.25)
    np.testing.assert_allclose(got, want, rtol=1e-14)


def test_grid_integrates_to_one(spec2, mixture2):
    s = sample(mixture2, 500, 9)
    g = EvalGrid.covering([[-5, 5], [-5, 5]], 0.05)
    v = kde_grid(s, spec2, 0.5, g, 2).value
    assert v.sum() * 0.05**2 == pytest.approx(1.0, abs=1e-3)


def test_bandwidth_helpers():
    with pytest.warns(RuntimeWarning):
        Bandwidths(0.5, 0.4)
    assert Bandwidths(0.3, 0.5).ratio_ok
    with pytest.raises(ValueError):
        Bandwidths(0.0, 1.0)
    assert rate_bandwidth(10**8, 2) == pytest.approx(0.1)
    assert gamma_rate(1000, 0.5, 2, 1) == pytest.approx(math.sqrt(math.log(1000) / (1000 * 0.5**4)))


def test_eval_grid_layout():
    g = EvalGrid.covering([[0, 1], [0, 0.5]], 0.25)
    assert g.shape == (5, 3)
    pts = g.points()
    # row-major: the last axis varies fastest
    np.testing.assert_allclose(pts[:3], [[0, 0], [0, 0.25], [0, 0.5]])
