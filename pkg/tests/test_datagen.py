"""Synthetic generator: loadings, scores, graph-correlated noise, bundles."""

import dataclasses

import numpy as np
import pytest

from grpca.datagen import (
    GeneratorConfig,
    generate_bundle,
    load_bundle,
    make_nuisance_loadings,
    make_scores,
    make_true_loadings,
    sample_noise,
    save_bundle,
    score_variances,
    soft_threshold,
    sub_maximal_degree_nodes,
)
from grpca.errors import InsufficientBoundary, InvalidParameter
from grpca.graphs import ErdosRenyi, FeatureGraph, generate, laplacian_quadratic
from grpca.numerics import RandomSource


def small_cfg(**over):
    base = dict(p=30, n=400, r=3, gamma=3.0, omega=0.3, spike_count=5,
                q_ratio=0.1, sigma1_sq=9.0, rho_var=0.8, tau=0.6, beta=1.0,
                sigma_e=1.0, seed=11)
    base.update(over)
    return GeneratorConfig(**base)


P3 = FeatureGraph(3, [(0, 1), (1, 2)])


class TestTrueLoadings:
    def test_no_filter_no_threshold_is_hard_mask(self):
        g = FeatureGraph(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
        cfg = small_cfg(p=5, r=1, gamma=0.0, omega=0.0, radius=1)
        loadings, centers, _ = make_true_loadings(g, cfg, RandomSource(0), centers=[2])
        expected = np.array([0.0, 1.0, 1.0, 1.0, 0.0])
        np.testing.assert_allclose(loadings[:, 0], expected / np.linalg.norm(expected))

    def test_p3_center_middle_hand_solve(self):
        # (I + L)^-1 e_1 solves to (1/4, 1/2, 1/4); normalized (1, 2, 1)/sqrt(6)
        cfg = small_cfg(p=3, r=1, gamma=1.0, omega=0.0, radius=0, spike_count=1)
        loadings, _, _ = make_true_loadings(P3, cfg, RandomSource(0), centers=[1])
        np.testing.assert_allclose(
            loadings[:, 0], np.array([1.0, 2.0, 1.0]) / np.sqrt(6.0), atol=1e-12
        )

    def test_threshold_fallback_records_effective_omega(self):
        # omega above every smoothed entry (max is 1/2): halvings kick in
        cfg = small_cfg(p=3, r=1, gamma=1.0, omega=0.6, radius=0, spike_count=1)
        loadings, _, eff = make_true_loadings(P3, cfg, RandomSource(0), centers=[1])
        assert eff[0] == pytest.approx(0.3)
        assert np.any(loadings[:, 0])

    def test_unit_norm_and_distinct_columns(self):
        g = generate(ErdosRenyi(0.15), 40, RandomSource(3))
        cfg = small_cfg(p=40, r=5)
        loadings, centers, _ = make_true_loadings(g, cfg, RandomSource(4))
        np.testing.assert_allclose(np.linalg.norm(loadings, axis=0), 1.0, atol=1e-12)
        gram = np.abs(loadings.T @ loadings - np.eye(5))
        assert gram.max() < 0.999
        assert len(set(centers.tolist())) == 5

    def test_smoothed_ball_positive_on_component(self):
        # with omega=0 the filtered mask is strictly positive on the
        # component containing the center (M-matrix inverse positivity)
        g = generate(ErdosRenyi(0.2), 25, RandomSource(5))
        cfg = small_cfg(p=25, r=1, omega=0.0, radius=2)
        loadings, centers, _ = make_true_loadings(g, cfg, RandomSource(6))
        comp = g.bfs_distances(int(centers[0])) >= 0
        assert np.all(loadings[comp, 0] > 0)


class TestNuisanceLoadings:
    def test_single_spike(self):
        g = generate(ErdosRenyi(0.2), 20, RandomSource(0))
        cfg = small_cfg(p=20, r=1, spike_count=1, q_ratio=1.0)
        cols = make_nuisance_loadings(g, cfg, RandomSource(1))
        assert cols.shape == (20, 1)
        nz = cols[np.abs(cols[:, 0]) > 0, 0]
        assert len(nz) == 1 and abs(abs(nz[0]) - 1.0) < 1e-12

    def test_four_spikes_half_magnitude(self):
        g = generate(ErdosRenyi(0.25), 20, RandomSource(2))
        cfg = small_cfg(p=20, r=1, spike_count=4, q_ratio=1.0)
        cols = make_nuisance_loadings(g, cfg, RandomSource(3))
        nz = cols[np.abs(cols[:, 0]) > 0, 0]
        assert len(nz) == 4
        np.testing.assert_allclose(np.abs(nz), 0.5)

    def test_complete_graph_has_no_boundary(self):
        g = FeatureGraph(6, [(i, j) for i in range(6) for j in range(i + 1, 6)])
        assert len(sub_maximal_degree_nodes(g)) == 0
        cfg = small_cfg(p=6, r=1, spike_count=1, q_ratio=1.0)
        with pytest.raises(InsufficientBoundary):
            make_nuisance_loadings(g, cfg, RandomSource(4))

    def test_spikes_only_on_sub_maximal_nodes(self):
        g = generate(ErdosRenyi(0.3), 25, RandomSource(5))
        cfg = small_cfg(p=25, r=2, spike_count=6, q_ratio=2.0)
        cols = make_nuisance_loadings(g, cfg, RandomSource(6))
        boundary = set(sub_maximal_degree_nodes(g).tolist())
        for col in cols.T:
            assert set(np.flatnonzero(np.abs(col) > 0).tolist()) <= boundary


class TestScores:
    def test_geometric_variance_ratio(self):
        cfg = small_cfg(rho_var=0.5, sigma1_sq=4.0)
        scores = make_scores(cfg, RandomSource(0), 100_000, 2, role="true")
        ratio = scores[:, 1].var() / scores[:, 0].var()
        assert abs(ratio - 0.5) <= 0.02

    def test_zero_count_empty(self):
        cfg = small_cfg()
        assert make_scores(cfg, RandomSource(0), 50, 0).shape == (50, 0)

    def test_deterministic(self):
        cfg = small_cfg()
        a = make_scores(cfg, RandomSource(9), 20, 3)
        b = make_scores(cfg, RandomSource(9), 20, 3)
        np.testing.assert_array_equal(a, b)

    def test_variance_mode_total_ratio(self):
        cfg = small_cfg(q_mode="variance", q_ratio=0.25, q_count=2)
        truth = score_variances(cfg, cfg.r, "true")
        nuis = score_variances(cfg, 2, "nuisance")
        assert nuis.sum() == pytest.approx(0.25 * truth.sum())

    def test_count_mode_shares_ladder(self):
        cfg = small_cfg(q_mode="count", q_ratio=2.0)
        truth = score_variances(cfg, 3, "true")
        nuis = score_variances(cfg, 3, "nuisance")
        np.testing.assert_allclose(truth, nuis)

    def test_nuisance_count_resolution(self):
        assert small_cfg(q_ratio=0.1, r=8).nuisance_count == 1
        assert small_cfg(q_ratio=2.0, r=8).nuisance_count == 16
        assert small_cfg(q_ratio=0.0).nuisance_count == 0
        assert small_cfg(q_count=5).nuisance_count == 5


class TestNoise:
    def test_diagonal_precision_variance(self):
        g = FeatureGraph(4, [])
        noise = sample_noise(g, tau=2.0, beta=0.0, rs=RandomSource(0), n=200_000)
        assert abs(noise.var() - 0.5) < 0.01

    def test_p3_covariance_matches_hand_inverse(self):
        # theta = [[2,-1,0],[-1,3,-1],[0,-1,2]], inverse = (1/8)[[5,2,1],[2,4,2],[1,2,5]]
        noise = sample_noise(P3, tau=1.0, beta=1.0, rs=RandomSource(1), n=100_000)
        cov = noise.T @ noise / noise.shape[0]
        expected = np.array([[5, 2, 1], [2, 4, 2], [1, 2, 5]]) / 8.0
        assert np.max(np.abs(cov - expected)) <= 0.05

    def test_neighbors_positively_correlated(self):
        noise = sample_noise(P3, tau=1.0, beta=1.0, rs=RandomSource(2), n=50_000)
        cov = noise.T @ noise / noise.shape[0]
        assert cov[0, 1] > 0 and cov[1, 2] > 0

    def test_covariance_oracle_p20(self):
        g = generate(ErdosRenyi(0.2), 20, RandomSource(3))
        noise = sample_noise(g, tau=0.8, beta=1.2, rs=RandomSource(4), n=100_000)
        cov = noise.T @ noise / noise.shape[0]
        theta = 0.8 * np.eye(20) + 1.2 * g.laplacian
        assert np.max(np.abs(cov - np.linalg.inv(theta))) <= 0.05


class TestGenerateBundle:
    def test_noiseless_rank_one(self):
        cfg = small_cfg(p=20, n=100, r=1, q_ratio=0.0, sigma_e=0.0, omega=0.0)
        bundle = generate_bundle(ErdosRenyi(0.3), cfg)
        s = np.linalg.svd(bundle.x, compute_uv=False)
        assert s[1] / s[0] <= 1e-8

    def test_standardization(self):
        bundle = generate_bundle(ErdosRenyi(0.2), small_cfg())
        assert np.max(np.abs(bundle.x.mean(axis=0))) <= 1e-10
        assert np.max(np.abs(bundle.x.std(axis=0) - 1.0)) <= 1e-8

    def test_deterministic(self):
        a = generate_bundle(ErdosRenyi(0.2), small_cfg())
        b = generate_bundle(ErdosRenyi(0.2), small_cfg())
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.v_star, b.v_star)

    @pytest.mark.parametrize("kind_name", ["ER", "BA", "WS"])
    def test_table_one_values_build_at_mid_density(self, kind_name):
        from grpca.graphs import density_to_params

        kind, _ = density_to_params(kind_name, 144, 0.2)
        cfg = GeneratorConfig(
            p=144, n=500, r=8, gamma=16.0, omega=0.4, spike_count=60,
            q_ratio=0.1, tau=0.55, beta=1.15, sigma_e=1.0, seed=5,
        )
        bundle = generate_bundle(kind, cfg)
        assert bundle.x.shape == (500, 144)
        assert bundle.v_star.shape == (144, 8)
        assert bundle.v_nu.shape == (144, 1)

    def test_theta_true_is_spd(self):
        bundle = generate_bundle(ErdosRenyi(0.2), small_cfg())
        vals = np.linalg.eigvalsh(bundle.theta_true)
        assert vals[0] > 0

    def test_nuisance_energy_exceeds_true_energy(self):
        # the generator's stated purpose: spikes carry high graph frequency
        ratios = []
        for seed in range(25):
            cfg = small_cfg(seed=seed, q_ratio=1.0, p=40, n=50)
            bundle = generate_bundle(ErdosRenyi(0.15), cfg)
            e_true = np.median(
                [laplacian_quadratic(bundle.graph, bundle.v_star[:, k]) for k in range(cfg.r)]
            )
            e_nuis = np.median(
                [laplacian_quadratic(bundle.graph, bundle.v_nu[:, k])
                 for k in range(bundle.v_nu.shape[1])]
            )
            ratios.append(e_nuis > e_true)
        assert np.mean(ratios) > 0.9

    def test_invalid_config_rejected(self):
        with pytest.raises(InvalidParameter):
            small_cfg(tau=0.0)
        with pytest.raises(InvalidParameter):
            small_cfg(rho_var=1.0)
        with pytest.raises(InvalidParameter):
            small_cfg(q_mode="bogus")


class TestBundleRoundTrip:
    def test_save_load_identical(self, tmp_path):
        bundle = generate_bundle(ErdosRenyi(0.2), small_cfg())
        save_bundle(bundle, tmp_path / "b")
        loaded = load_bundle(tmp_path / "b")
        np.testing.assert_array_equal(loaded.x, bundle.x)
        np.testing.assert_array_equal(loaded.v_star, bundle.v_star)
        np.testing.assert_array_equal(loaded.v_nu, bundle.v_nu)
        np.testing.assert_array_equal(loaded.u_star, bundle.u_star)
        assert loaded.graph == bundle.graph
        np.testing.assert_allclose(loaded.theta_true, bundle.theta_true)
        assert loaded.config == bundle.config
        assert loaded.topology == bundle.topology

    def test_meta_contents(self, tmp_path):
        import json

        bundle = generate_bundle(ErdosRenyi(0.2), small_cfg())
        save_bundle(bundle, tmp_path / "b")
        meta = json.loads((tmp_path / "b" / "meta.json").read_text())
        assert meta["config"]["p"] == 30
        assert "achieved_density" in meta and "realized_density" in meta
        assert len(meta["effective_omega"]) == 3


def test_soft_threshold_formula():
    x = np.array([-2.0, -0.5, 0.0, 0.3, 1.5])
    np.testing.assert_allclose(soft_threshold(x, 0.5), [-1.5, 0.0, 0.0, 0.0, 1.0])
