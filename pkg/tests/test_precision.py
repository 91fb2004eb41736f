"""Graphical lasso: closed-form cases, KKT optimality, CV selection."""

import numpy as np
import pytest

from grpca.datagen import sample_noise
from grpca.errors import NotPositiveDefinite, TooFewSamples
from grpca.graphs import ErdosRenyi, FeatureGraph, generate
from grpca.numerics import RandomSource
from grpca.precision import (
    default_penalty_path,
    empirical_covariance,
    glasso,
    glasso_cv,
    import_precision_csv,
    oracle_precision,
    thresholded_inverse,
)


def two_by_two_objective(s, theta, rho):
    sign, logdet = np.linalg.slogdet(theta)
    assert sign > 0
    return logdet - np.sum(s * theta) - rho * 2 * abs(theta[0, 1])


class TestEmpiricalCovariance:
    def test_single_column_biased_variance(self):
        x = np.array([[1.0], [3.0], [-4.0]])
        np.testing.assert_allclose(empirical_covariance(x), [[np.sum(x**2) / 3]])

    def test_orthogonal_scaled_columns_identity(self):
        n = 16
        q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((n, 4)))
        x = q * np.sqrt(n)
        np.testing.assert_allclose(empirical_covariance(x), np.eye(4), atol=1e-12)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((100, 5))
        s = empirical_covariance(x)
        oracle = np.zeros((5, 5))
        for i in range(5):
            for j in range(5):
                oracle[i, j] = np.sum(x[:, i] * x[:, j]) / 100
        np.testing.assert_allclose(s, oracle, atol=1e-12)

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            empirical_covariance(np.ones((1, 3)))


class TestGlasso:
    def test_diagonal_covariance_exact(self):
        s = np.diag([2.0, 0.5, 1.25])
        est = glasso(s, penalty=0.1)
        np.testing.assert_allclose(est.theta, np.diag(1.0 / np.diag(s)), atol=1e-9)
        assert est.support_graph.edge_count == 0
        assert est.diagnostics.converged

    def test_full_sparsification_above_rho_max(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((50, 4))
        s = empirical_covariance(a - a.mean(0))
        rho_max = np.max(np.abs(s - np.diag(np.diag(s))))
        est = glasso(s, penalty=rho_max * 1.0001)
        off = est.theta - np.diag(np.diag(est.theta))
        np.testing.assert_allclose(off, 0.0, atol=1e-12)
        # subgradient check: |W_ij - S_ij| <= rho with W = diag
        np.testing.assert_allclose(np.diag(est.theta), 1.0 / np.diag(s), atol=1e-9)

    def test_two_by_two_closed_form_and_grid_oracle(self):
        s = np.array([[1.0, 0.5], [0.5, 1.0]])
        rho = 0.1
        est = glasso(s, penalty=rho, tol=1e-8)
        # positive correlation forces a negative precision off-diagonal
        assert est.theta[0, 1] < 0
        # closed form: W = S with off-diagonal shrunk by rho
        w = np.array([[1.0, 0.4], [0.4, 1.0]])
        np.testing.assert_allclose(est.theta, np.linalg.inv(w), atol=1e-6)
        # brute-force objective grid around the solution cannot do better
        best = two_by_two_objective(s, est.theta, rho)
        for d_off in np.linspace(-0.05, 0.05, 21):
            theta = est.theta.copy()
            theta[0, 1] = theta[1, 0] = theta[0, 1] + d_off
            if np.linalg.eigvalsh(theta)[0] <= 0:
                continue
            assert two_by_two_objective(s, theta, rho) <= best + 1e-9

    def test_objective_monotone_non_increasing(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((200, 12))
        s = empirical_covariance(a - a.mean(0))
        est = glasso(s, penalty=0.05, tol=1e-6)
        trace = est.diagnostics.objective_trace
        assert len(trace) >= 2
        for prev, cur in zip(trace, trace[1:]):
            assert cur <= prev + 1e-9

    def test_kkt_conditions(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((500, 8))
        s = empirical_covariance(a - a.mean(0))
        rho = 0.08
        est = glasso(s, penalty=rho, tol=1e-7, max_iter=200)
        w = np.linalg.inv(est.theta)
        for i in range(8):
            assert abs(w[i, i] - s[i, i]) <= 1e-4
            for j in range(8):
                if i == j:
                    continue
                assert abs(w[i, j] - s[i, j]) <= rho + 1e-4
                if est.theta[i, j] != 0:
                    # active entries sit on the penalty boundary with the right sign
                    np.testing.assert_allclose(
                        w[i, j] - s[i, j], -rho * np.sign(est.theta[i, j]), atol=1e-4
                    )

    def test_negative_eigenvalue_rejected(self):
        s = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(NotPositiveDefinite):
            glasso(s, penalty=0.1)

    def test_theta_spd_and_symmetric(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((100, 10))
        s = empirical_covariance(a - a.mean(0))
        est = glasso(s, penalty=0.2)
        np.testing.assert_allclose(est.theta, est.theta.T, atol=1e-10)
        assert np.linalg.eigvalsh(est.theta)[0] > 0


class TestGlassoCv:
    def _data_from_graph(self, p, n, tau, beta, seed, density=0.15):
        graph = generate(ErdosRenyi(density), p, RandomSource(seed))
        x = sample_noise(graph, tau, beta, RandomSource(seed + 1000), n)
        return graph, x - x.mean(axis=0)

    def test_diagonal_gaussian_low_false_support(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((2000, 8)) * np.array([1.0, 2.0, 0.5, 1.5, 1.0, 0.7, 1.2, 0.9])
        x -= x.mean(0)
        est = glasso_cv(x, path=np.geomspace(1.0, 0.001, 12))
        off = est.theta - np.diag(np.diag(est.theta))
        false_frac = np.mean(np.abs(off[np.triu_indices(8, 1)]) > 1e-4)
        assert false_frac <= 0.05

    def test_leave_one_out_runs(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((6, 3))
        x -= x.mean(0)
        est = glasso_cv(x, k_folds=6, path=np.array([0.5, 0.1]))
        assert np.isfinite([s for _, s in est.diagnostics.cv_path]).all()

    def test_support_recovery_on_planted_precision(self):
        graph, x = self._data_from_graph(p=12, n=5000, tau=0.5, beta=1.5, seed=8)
        est = glasso_cv(x, k_folds=5)
        true_edges = {tuple(e) for e in graph.edges}
        found_edges = {tuple(e) for e in est.support_graph.edges}
        tp = len(true_edges & found_edges)
        precision_score = tp / max(len(found_edges), 1)
        recall = tp / max(len(true_edges), 1)
        f1 = 2 * precision_score * recall / max(precision_score + recall, 1e-12)
        assert f1 >= 0.8

    def test_selection_invariant_to_path_order(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((300, 6))
        x -= x.mean(0)
        path = np.array([0.4, 0.05, 0.2, 0.01])
        a = glasso_cv(x, path=path)
        b = glasso_cv(x, path=path[::-1])
        assert a.penalty == b.penalty
        np.testing.assert_allclose(a.theta, b.theta)

    def test_cv_path_recorded(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal((200, 5))
        x -= x.mean(0)
        est = glasso_cv(x, path=np.array([0.3, 0.1, 0.03]))
        assert est.provenance == "glasso_cv"
        assert len(est.diagnostics.cv_path) == 3
        penalties = [rho for rho, _ in est.diagnostics.cv_path]
        assert penalties == sorted(penalties, reverse=True)


class TestOraclePrecision:
    def test_support_equals_graph_edges(self):
        graph = generate(ErdosRenyi(0.25), 15, RandomSource(11))
        theta = 0.5 * np.eye(15) + 1.2 * graph.laplacian
        est = oracle_precision(theta)
        assert est.provenance == "oracle" and est.penalty == 0.0
        assert est.support_graph == graph

    def test_identity_has_empty_support(self):
        est = oracle_precision(np.eye(5))
        assert est.support_graph.edge_count == 0

    def test_beta_zero_empty_support(self):
        graph = generate(ErdosRenyi(0.3), 10, RandomSource(12))
        theta = 0.7 * np.eye(10) + 0.0 * graph.laplacian
        assert oracle_precision(theta).support_graph.edge_count == 0

    def test_non_spd_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            oracle_precision(np.array([[1.0, 2.0], [2.0, 1.0]]))


class TestFallbacksAndImport:
    def test_thresholded_inverse(self):
        rng = np.random.default_rng(13)
        a = rng.standard_normal((500, 6))
        s = empirical_covariance(a - a.mean(0))
        est = thresholded_inverse(s, threshold=0.05)
        assert est.provenance == "thresholded_inverse"
        assert np.linalg.eigvalsh(est.theta)[0] > 0

    def test_import_precision_csv(self, tmp_path):
        graph = FeatureGraph(4, [(0, 1), (2, 3)])
        theta = np.eye(4) + 0.4 * graph.laplacian
        path = tmp_path / "theta.csv"
        np.savetxt(path, theta, delimiter=",")
        est = import_precision_csv(path)
        np.testing.assert_allclose(est.theta, theta)
        assert est.support_graph == graph

    def test_default_path_shape(self):
        s = np.array([[1.0, 0.3], [0.3, 1.0]])
        path = default_penalty_path(s, size=10, min_ratio=0.01)
        assert len(path) == 10
        assert path[0] == pytest.approx(0.3)
        assert path[-1] == pytest.approx(0.003)
        assert np.all(np.diff(path) < 0)
