"""Linear-algebra core: factorization contracts and the random source."""

import numpy as np
import pytest

from grpca.errors import NotPositiveDefinite, RankTooLarge
from grpca.numerics import (
    RandomSource,
    cholesky,
    power_iteration,
    spd_solve,
    standard_normal,
    symmetric_eigen,
    truncated_svd,
)


def path_laplacian(p):
    lap = np.zeros((p, p))
    for i in range(p - 1):
        lap[i, i] += 1
        lap[i + 1, i + 1] += 1
        lap[i, i + 1] -= 1
        lap[i + 1, i] -= 1
    return lap


class TestCholesky:
    def test_identity(self):
        np.testing.assert_allclose(cholesky(np.eye(3)), np.eye(3))

    def test_hand_checked_2x2(self):
        # [[2,0],[1,sqrt(2)]] @ its transpose reproduces [[4,2],[2,3]]
        lower = cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]))
        np.testing.assert_allclose(lower, [[2.0, 0.0], [1.0, np.sqrt(2.0)]])

    def test_indefinite_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))  # eigenvalues 3, -1

    def test_tiny_pivot_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky(np.diag([1.0, 1e-13]))

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError):
            cholesky(np.array([[1.0, 0.5], [0.2, 1.0]]))

    def test_reconstruction_property(self):
        rng = np.random.default_rng(0)
        for dim in (2, 5, 17, 40):
            a = rng.standard_normal((dim, dim))
            spd = a @ a.T + dim * np.eye(dim)
            lower = cholesky(spd)
            err = np.linalg.norm(lower @ lower.T - spd) / np.linalg.norm(spd)
            assert err <= 1e-8
            assert np.all(np.diag(lower) > 0)


class TestSymmetricEigen:
    def test_diagonal(self):
        values, vectors = symmetric_eigen(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_allclose(values, [1.0, 2.0, 3.0])
        np.testing.assert_allclose(np.abs(vectors), np.eye(3)[:, [1, 2, 0]], atol=1e-12)

    def test_path_graph_spectrum(self):
        # characteristic polynomial of the 3-node path Laplacian: roots 0, 1, 3
        values, _ = symmetric_eigen(path_laplacian(3))
        np.testing.assert_allclose(values, [0.0, 1.0, 3.0], atol=1e-12)

    def test_zero_matrix(self):
        values, vectors = symmetric_eigen(np.zeros((4, 4)))
        np.testing.assert_allclose(values, np.zeros(4))
        np.testing.assert_allclose(vectors.T @ vectors, np.eye(4), atol=1e-12)

    def test_residuals_and_orthonormality(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((30, 30))
        sym = a + a.T
        values, vectors = symmetric_eigen(sym)
        assert np.all(np.diff(values) >= -1e-12)
        np.testing.assert_allclose(vectors.T @ vectors, np.eye(30), atol=1e-8)
        scale = np.linalg.norm(sym)
        for i in range(30):
            resid = np.linalg.norm(sym @ vectors[:, i] - values[i] * vectors[:, i])
            assert resid <= 1e-8 * scale

    def test_laplacian_kernel(self):
        values, _ = symmetric_eigen(path_laplacian(12))
        assert abs(values[0]) <= 1e-8


class TestTruncatedSvd:
    def test_identity_all_ones(self):
        _, s, _ = truncated_svd(np.eye(4), 2)
        np.testing.assert_allclose(s, [1.0, 1.0])

    def test_rank_one_outer_product(self):
        a = np.array([1.0, 2.0, -1.0, 0.5])
        b = np.array([3.0, -1.0, 2.0])
        u, s, v = truncated_svd(np.outer(a, b), 1)
        np.testing.assert_allclose(s[0], np.linalg.norm(a) * np.linalg.norm(b))
        np.testing.assert_allclose(u * s @ v.T, np.outer(a, b), atol=1e-10)

    def test_matches_lapack_svd(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((8, 5))
        u, s, v = truncated_svd(x, 3)
        s_ref = np.linalg.svd(x, compute_uv=False)[:3]
        np.testing.assert_allclose(s, s_ref, rtol=1e-6)
        best = (np.linalg.svd(x, full_matrices=False)[0][:, :3] * s_ref) @ np.linalg.svd(x)[2][:3]
        np.testing.assert_allclose(
            np.linalg.norm(x - (u * s) @ v.T), np.linalg.norm(x - best), rtol=1e-6
        )

    def test_full_rank_reconstructs(self):
        rng = np.random.default_rng(3)
        for n, p in ((6, 9), (9, 6), (7, 7)):
            x = rng.standard_normal((n, p))
            u, s, v = truncated_svd(x, min(n, p))
            err = np.linalg.norm(x - (u * s) @ v.T) / np.linalg.norm(x)
            assert err <= 1e-6

    def test_orthonormal_factors_and_order(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((20, 12))
        u, s, v = truncated_svd(x, 5)
        assert np.all(np.diff(s) <= 1e-12) and np.all(s >= 0)
        np.testing.assert_allclose(u.T @ u, np.eye(5), atol=1e-10)
        np.testing.assert_allclose(v.T @ v, np.eye(5), atol=1e-10)

    def test_rank_deficient_input_still_orthonormal(self):
        x = np.zeros((5, 4))
        x[:, 0] = 1.0
        u, s, v = truncated_svd(x, 3)
        np.testing.assert_allclose(u.T @ u, np.eye(3), atol=1e-10)
        assert s[1] <= 1e-12

    def test_rank_too_large(self):
        with pytest.raises(RankTooLarge):
            truncated_svd(np.eye(4), 5)


class TestSpdSolve:
    def test_identity(self):
        b = np.arange(6.0).reshape(3, 2)
        np.testing.assert_allclose(spd_solve(np.eye(3), b), b)

    def test_scalar_scaling(self):
        out = spd_solve(2.0 * np.eye(2), np.array([[4.0], [6.0]]))
        np.testing.assert_allclose(out, [[2.0], [3.0]])

    def test_tikhonov_filter_residual(self):
        a = np.eye(3) + path_laplacian(3)
        b = np.array([1.0, 0.0, 0.0])
        x = spd_solve(a, b)
        assert np.linalg.norm(a @ x - b) <= 1e-8 * np.linalg.norm(b)

    def test_roundtrip_property_up_to_200(self):
        rng = np.random.default_rng(5)
        for dim in (10, 60, 200):
            m = rng.standard_normal((dim, dim))
            a = m @ m.T + dim * np.eye(dim)
            b = rng.standard_normal((dim, 3))
            x = spd_solve(a, b)
            assert np.linalg.norm(a @ x - b) <= 1e-8 * np.linalg.norm(b)


class TestRandomSource:
    def test_same_seed_identical(self):
        a = standard_normal(RandomSource(42), 10, 7)
        b = standard_normal(RandomSource(42), 10, 7)
        np.testing.assert_array_equal(a, b)

    def test_large_sample_moments(self):
        draws = standard_normal(RandomSource(7), 1000, 1000)
        assert abs(draws.mean()) < 0.01
        assert abs(draws.var() - 1.0) < 0.01

    def test_different_seeds_differ(self):
        a = standard_normal(RandomSource(1), 100, 100)
        b = standard_normal(RandomSource(2), 100, 100)
        assert np.mean(a != b) >= 0.99

    def test_child_streams_independent_of_order(self):
        root = RandomSource(9)
        c1 = root.child(3).normal(4, 4)
        # consuming other streams must not disturb the keyed child
        other = RandomSource(9)
        other.child(1).normal(100)
        other.child(2).normal(100)
        np.testing.assert_array_equal(other.child(3).normal(4, 4), c1)

    def test_derived_seed_stable(self):
        assert RandomSource(5).child(1, 2).derived_seed() == RandomSource(5).child(1, 2).derived_seed()


class TestPowerIteration:
    def test_matches_eigh(self):
        rng = np.random.default_rng(6)
        for dim in (3, 20, 64):
            m = rng.standard_normal((dim, dim))
            psd = m @ m.T
            top = power_iteration(psd)
            ref = np.linalg.eigvalsh(psd)[-1]
            assert abs(top - ref) <= 1e-6 * ref

    def test_zero_matrix(self):
        assert power_iteration(np.zeros((4, 4))) == 0.0

    def test_laplacian_with_kernel(self):
        lap = path_laplacian(10)
        ref = np.linalg.eigvalsh(lap)[-1]
        assert abs(power_iteration(lap) - ref) <= 1e-6 * ref
