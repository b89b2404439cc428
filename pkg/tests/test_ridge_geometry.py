import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ridgeconf.density import gaussian, model_derivs, sample, smoothed_derivs
from ridgeconf.derivs import DerivPack
from ridgeconf.errors import DegenerateFrameError, SingularMatrixError
from ridgeconf.geometry import (
    inv_sqrt_spd,
    m_vectors,
    ordered_eigen,
    propagate_orientation,
    ridge_stats,
    sigma_lower_bound,
)
from ridgeconf.indexing import build_index_maps
from ridgeconf.kernel import KernelSpec, kernel_constants


def _random_frame(rng, d):
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    lam = np.sort(rng.uniform(-3, 1, size=d))[::-1]
    lam += np.linspace(0, -0.3 * d, d)  # keep gaps away from zero
    return lam, q, q @ np.diag(lam) @ q.T


class TestOrderedEigen:
    def test_diagonal(self):
        fr = ordered_eigen(np.diag([2.0, -3.0]))
        np.testing.assert_array_equal(fr.eigenvalues, [2, -3])
        np.testing.assert_allclose(np.abs(fr.eigenvectors), np.eye(2))

    def test_swap_matrix(self):
        ref = np.array([[1.0, 1.0], [1.0, -1.0]])
        fr = ordered_eigen(np.array([[0.0, 1.0], [1.0, 0.0]]), orientation_ref=ref)
        np.testing.assert_allclose(fr.eigenvalues, [1, -1])
        np.testing.assert_allclose(fr.eigenvectors[:, 0], np.array([1, 1]) / np.sqrt(2))
        fr2 = ordered_eigen(np.array([[0.0, 1.0], [1.0, 0.0]]), orientation_ref=-ref)
        np.testing.assert_allclose(fr2.eigenvectors[:, 0], -np.array([1, 1]) / np.sqrt(2))

    def test_repeated_flagged(self):
        assert ordered_eigen(np.eye(2)).degenerate
        assert not ordered_eigen(np.diag([1.0, 0.5])).degenerate

    def test_nonsymmetric_rejected(self):
        with pytest.raises(ValueError):
            ordered_eigen(np.array([[0.0, 1.0], [0.0, 0.0]]))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 4), st.integers(0, 2**32 - 1))
    def test_frame_invariants(self, d, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(d, d))
        H = a + a.T
        ref = rng.normal(size=(d, d))
        fr = ordered_eigen(H, orientation_ref=ref)
        V, lam = fr.eigenvectors, fr.eigenvalues
        assert np.all(np.diff(lam) <= 0)
        np.testing.assert_allclose(V.T @ V, np.eye(d), atol=1e-10)
        np.testing.assert_allclose((V * lam) @ V.T, H, atol=1e-9)
        assert np.all(np.einsum("ki,ki->i", V, ref) >= 0)

    def test_orientation_continuity_along_path(self):
        t = np.linspace(0, 2 * np.pi, 400)
        c, s = np.cos(t), np.sin(t)
        rot = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -1)
        H = rot @ np.diag([1.0, -2.0]) @ np.swapaxes(rot, -1, -2)
        V = propagate_orientation(ordered_eigen(H).eigenvectors)
        dots = np.einsum("nki,nki->ni", V[1:], V[:-1])
        assert np.all(dots > 0)
        # chaining the reference point to point gives the same frames
        prev = None
        for k in range(len(H)):
            fr = ordered_eigen(H[k], orientation_ref=prev)
            prev = fr.eigenvectors
            np.testing.assert_allclose(prev, V[k], atol=1e-12)


class TestMVectors:
    def test_axis_example(self, maps2):
        g, l1, l2 = 0.7, -0.2, -1.5
        pack = DerivPack(np.array(1.0), np.array([g, 0.0]), np.diag([l1, l2]))
        M = m_vectors(pack, ordered_eigen(pack.hess), 1, maps2)
        np.testing.assert_allclose(np.abs(M[:, 0]), np.abs(g / (l2 - l1)) * np.array([0, 1, 0]), atol=1e-15)

    def test_zero_gradient(self, maps3):
        rng = np.random.default_rng(0)
        _, _, H = _random_frame(rng, 3)
        pack = DerivPack(np.array(1.0), np.zeros(3), H)
        for r in (1, 2):
            np.testing.assert_array_equal(m_vectors(pack, ordered_eigen(H), r, maps3), 0.0)

    def test_degenerate_gap_raises(self, maps2):
        pack = DerivPack(np.array(1.0), np.array([1.0, 0.0]), np.eye(2))
        with pytest.raises(DegenerateFrameError):
            m_vectors(pack, ordered_eigen(pack.hess), 1, maps2)

    def test_simplified_needs_r1(self, maps3):
        rng = np.random.default_rng(1)
        _, _, H = _random_frame(rng, 3)
        pack = DerivPack(np.array(1.0), rng.normal(size=3), H)
        with pytest.raises(ValueError):
            m_vectors(pack, ordered_eigen(H), 2, maps3, mode="r1_simplified")

    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_full_vs_simplified_at_ridge_points(self, d):
        # the two forms coincide where grad f is parallel to v_1, i.e. on a 1-ridge
        maps = build_index_maps(d)
        rng = np.random.default_rng(d)
        for _ in range(100):
            lam, Q, H = _random_frame(rng, d)
            grad = rng.normal() * Q[:, 0]
            pack = DerivPack(np.array(1.0), grad, H)
            fr = ordered_eigen(H)
            a = m_vectors(pack, fr, 1, maps)
            b = m_vectors(pack, fr, 1, maps, mode="r1_simplified")
            for k in range(d - 1):
                assert min(np.abs(a[:, k] - b[:, k]).max(), np.abs(a[:, k] + b[:, k]).max()) < 1e-10

    def test_against_explicit_formula(self, maps3):
        rng = np.random.default_rng(5)
        lam, Q, H = _random_frame(rng, 3)
        grad = rng.normal(size=3)
        pack = DerivPack(np.array(1.0), grad, H)
        fr = ordered_eigen(H)
        V, L = fr.eigenvectors, fr.eigenvalues
        for r in (1, 2):
            M = m_vectors(pack, fr, r, maps3)
            for col, i in enumerate(range(r, 3)):
                w = sum((V[:, j] @ grad) / (L[i] - L[j]) * V[:, j] for j in range(r))
                np.testing.assert_allclose(M[:, col], maps3.dup.T @ np.kron(V[:, i], w), atol=1e-13)


class TestInvSqrt:
    def test_identity_and_diagonal(self):
        np.testing.assert_allclose(inv_sqrt_spd(np.eye(3)), np.eye(3), atol=1e-15)
        np.testing.assert_allclose(inv_sqrt_spd(np.diag([4.0, 9.0])), np.diag([0.5, 1 / 3]), atol=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_random_spd_residual(self, d, seed):
        a = np.random.default_rng(seed).normal(size=(d, d))
        S = a @ a.T + 0.1 * np.eye(d)
        T = inv_sqrt_spd(S)
        assert np.abs(T @ S @ T - np.eye(d)).max() <= 1e-10
        np.testing.assert_allclose(T, T.T, atol=1e-12)
        assert np.linalg.eigvalsh(T).min() > 0

    def test_matches_scipy_route(self):
        from scipy.linalg import fractional_matrix_power

        a = np.random.default_rng(3).normal(size=(3, 3))
        S = a @ a.T + np.eye(3)
        np.testing.assert_allclose(inv_sqrt_spd(S), np.real(fractional_matrix_power(S, -0.5)), atol=1e-10)

    def test_singular_raises(self):
        with pytest.raises(SingularMatrixError):
            inv_sqrt_spd(np.diag([1.0, 0.0]))


class TestRidgeStats:
    def test_axis_point_has_zero_statistic(self, consts2, maps2):
        m = gaussian([0, 0], np.diag([4.0, 1.0]), [[-3, 3], [-3, 3]])
        diag = ridge_stats(model_derivs(m, np.array([[1.0, 0.0], [-2.0, 0.0]]), 2), 1, consts2, maps2)
        np.testing.assert_allclose(diag.proj_grad, 0, atol=1e-16)
        np.testing.assert_allclose(diag.Bn, 0, atol=1e-14)
        assert np.all(diag.lambda_rp1 < 0) and not diag.near_critical.any()

    def test_contract_before_and_after_scaling(self, consts3, maps3):
        rng = np.random.default_rng(4)
        lam, Q, H = _random_frame(rng, 3)
        pack = DerivPack(np.array(0.3), rng.normal(size=3), H)
        for s in (1.0, 2.5):
            p = pack.scaled(s)
            for r in (1, 2):
                dg = ridge_stats(p, r, consts3, maps3)
                fS = p.value * dg.Sigma
                np.testing.assert_allclose(dg.Qn @ fS @ dg.Qn, np.eye(3 - r), atol=1e-8)
                np.testing.assert_allclose(dg.Qn, inv_sqrt_spd(fS), atol=1e-10)
                assert dg.Bn == pytest.approx(np.linalg.norm(dg.Qn @ dg.proj_grad))

    def test_batch_equals_single(self, consts2, maps2, mixture2):
        x = np.random.default_rng(5).uniform(-1, 1, size=(6, 2))
        batch = ridge_stats(model_derivs(mixture2, x, 2), 1, consts2, maps2)
        for k in range(6):
            one = ridge_stats(model_derivs(mixture2, x[k], 2), 1, consts2, maps2)
            assert one.Bn == pytest.approx(batch.Bn[k], rel=1e-12)

    def test_zero_density_flagged(self, consts2, maps2):
        pack = DerivPack(np.array(0.0), np.array([0.1, 0.0]), np.diag([-0.1, -1.0]))
        assert ridge_stats(pack, 1, consts2, maps2).near_critical

    @pytest.mark.parametrize("d,r", [(2, 1), (3, 1), (3, 2)])
    def test_sigma_lower_bound(self, d, r):
        consts = kernel_constants(KernelSpec(d))
        maps = build_index_maps(d)
        rng = np.random.default_rng(10 * d + r)
        for _ in range(100):
            lam, Q, H = _random_frame(rng, d)
            grad = Q[:, :r] @ rng.normal(size=r)  # regular ridge point: grad in the tangent span
            pack = DerivPack(np.array(1.0), grad, H)
            dg = ridge_stats(pack, r, consts, maps)
            bound = sigma_lower_bound(dg.frame, grad, r, consts, maps)
            assert np.linalg.eigvalsh(dg.Sigma).min() >= bound * (1 - 1e-10)
            assert np.linalg.eigvalsh(dg.Sigma).min() > 0
