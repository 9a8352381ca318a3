import numpy as np
import pytest

from caribou.accountant import PrivacySpec
from caribou.graphs import gen_chain_dataset, normalized_adjacency
from caribou.layers import LayerParams, layer_forward, project_rows
from caribou.pipeline import PipelineConfig, RunArtifacts, run_pipeline, sample_gaussian_matrix
from caribou.prng import stream


def chain_config(level="none", eps=8.0, k=3, c_l=0.5, seed=0, mode="convergent"):
    params = LayerParams(c_l=c_l, alpha1=1.0, alpha2=0.0, beta=0.0)
    spec = PrivacySpec(
        epsilon=eps,
        delta=1e-3,
        level=level,
        k_hops=max(k, 1),
        gamma=c_l if level != "none" else 0.0,
    )
    return PipelineConfig(cgl=params, spec=spec, k_hops=k, seed=seed, mode=mode)


class TestSampler:
    def test_zero_std_is_zero_matrix(self):
        out = sample_gaussian_matrix(4, 3, 0.0, stream(0, 1))
        assert np.array_equal(out, np.zeros((4, 3)))

    def test_sample_mean_clt_bound(self):
        std = 0.7
        out = sample_gaussian_matrix(1000, 1000, std, stream(1, 2))
        assert abs(out.mean()) < 4.0 * std / 1000.0

    def test_sample_std(self):
        out = sample_gaussian_matrix(1000, 1000, 2.5, stream(2, 3))
        assert out.std() == pytest.approx(2.5, rel=0.01)

    def test_same_stream_same_matrix(self):
        a = sample_gaussian_matrix(8, 2, 1.0, stream(7, 4))
        b = sample_gaussian_matrix(8, 2, 1.0, stream(7, 4))
        assert np.array_equal(a, b)

    def test_negative_std_rejected(self):
        with pytest.raises(ValueError):
            sample_gaussian_matrix(1, 1, -0.1, stream(0, 0))


class TestConfigValidation:
    def test_hop_mismatch_rejected(self):
        params = LayerParams(c_l=0.5, alpha1=1.0, alpha2=0.0, beta=0.0)
        spec = PrivacySpec(epsilon=1.0, delta=1e-3, level="edge", k_hops=2, gamma=0.5)
        with pytest.raises(ValueError, match="k_hops"):
            PipelineConfig(cgl=params, spec=spec, k_hops=3, seed=0)

    def test_gamma_mismatch_rejected(self):
        params = LayerParams(c_l=0.5, alpha1=1.0, alpha2=0.0, beta=0.0)
        spec = PrivacySpec(epsilon=1.0, delta=1e-3, level="edge", k_hops=2, gamma=0.9)
        with pytest.raises(ValueError, match="gamma"):
            PipelineConfig(cgl=params, spec=spec, k_hops=2, seed=0)


class TestRunPipeline:
    def test_k0_no_noise_returns_input(self):
        ds = gen_chain_dataset(2, 4, 2, 3, seed=0)
        artifacts = run_pipeline(ds, chain_config(k=0))
        assert np.array_equal(artifacts.x_k_final, ds.features)

    def test_noiseless_equals_stacked_layers(self):
        ds = gen_chain_dataset(2, 4, 2, 3, seed=1)
        cfg = chain_config(k=3, c_l=0.7)
        artifacts = run_pipeline(ds, cfg)
        adj = normalized_adjacency(ds.graph)
        x = ds.features.copy()
        for _ in range(3):
            x = project_rows(layer_forward(adj, x, ds.features, cfg.cgl))
        assert np.allclose(artifacts.x_k_final, x)

    def test_deterministic_per_seed(self):
        ds = gen_chain_dataset(6, 8, 2, 5, seed=0)
        cfg = chain_config(level="edge", eps=8.0, k=8, c_l=0.5, seed=11)
        a = run_pipeline(ds, cfg)
        b = run_pipeline(ds, cfg)
        assert np.array_equal(a.x_k_final, b.x_k_final)
        c = run_pipeline(ds, chain_config(level="edge", eps=8.0, k=8, c_l=0.5, seed=12))
        assert not np.array_equal(a.x_k_final, c.x_k_final)

    def test_rows_stay_bounded(self):
        ds = gen_chain_dataset(4, 6, 2, 4, seed=2)
        for level, eps in (("none", 8.0), ("edge", 2.0), ("node", 8.0)):
            artifacts = run_pipeline(ds, chain_config(level=level, eps=eps, k=4))
            norms = np.linalg.norm(artifacts.x_k_final, axis=1)
            assert norms.max() <= 1.0 + 1e-12

    def test_injected_std_is_delta_times_sigma(self):
        ds = gen_chain_dataset(4, 6, 2, 4, seed=3)
        artifacts = run_pipeline(ds, chain_config(level="edge", eps=4.0, k=2))
        plan = artifacts.plan
        assert artifacts.per_hop_noise_std == plan.delta_mp * plan.sigma
        assert plan.delta_mp > 0 and plan.sigma > 0

    def test_unnormalized_features_rejected(self):
        ds = gen_chain_dataset(2, 3, 2, 3, seed=0)
        bad = ds.__class__(
            graph=ds.graph,
            features=ds.features * 3.0,
            labels=ds.labels,
            train_mask=ds.train_mask,
            test_mask=ds.test_mask,
        )
        with pytest.raises(ValueError, match="row norm"):
            run_pipeline(bad, chain_config(k=2))

    def test_isolated_node_rejected_under_edge_level(self):
        from caribou.graphs import LabeledDataset, build_graph

        g = build_graph(3, [(0, 1)])
        ds = LabeledDataset(
            graph=g,
            features=np.zeros((3, 2)),
            labels=np.zeros(3, dtype=np.int64),
        )
        with pytest.raises(ValueError, match="minimum degree"):
            run_pipeline(ds, chain_config(level="edge", k=1))

    def test_level_none_plan_is_noiseless(self):
        ds = gen_chain_dataset(2, 4, 2, 3, seed=4)
        artifacts = run_pipeline(ds, chain_config(level="none", k=2))
        assert artifacts.plan.sigma == 0.0
        assert artifacts.per_hop_noise_std == 0.0
        assert artifacts.plan.eps_achieved == 0.0

    def test_contraction_iterates_settle(self):
        # without noise and residual, successive iterate gaps stop growing
        rng = stream(41, 0)
        from tests.test_graphs import random_graph

        for trial in range(50):
            n = int(rng.integers(2, 33))
            g = random_graph(rng, n)
            adj = normalized_adjacency(g)
            params = LayerParams(c_l=0.8, alpha1=1.0, alpha2=0.0, beta=0.0)
            x = project_rows(rng.normal(size=(n, 3)))
            x0 = np.zeros_like(x)
            gaps = []
            prev = x
            for _ in range(64):
                nxt = project_rows(layer_forward(adj, prev, x0, params))
                gaps.append(float(np.linalg.norm(nxt - prev)))
                prev = nxt
            tail = gaps[8:]
            assert all(a >= b - 1e-12 for a, b in zip(tail, tail[1:]))


class TestArtifactsIo:
    def test_save_files(self, tmp_path):
        ds = gen_chain_dataset(2, 4, 2, 3, seed=5)
        artifacts = run_pipeline(ds, chain_config(level="edge", eps=4.0, k=2))
        from caribou.pipeline import save_artifacts

        emb = tmp_path / "embedding.csv"
        plan = tmp_path / "plan.json"
        save_artifacts(artifacts, emb, plan)
        rows = emb.read_text().strip().split("\n")
        assert len(rows) == ds.graph.num_nodes
        import json

        sidecar = json.loads(plan.read_text())
        assert sidecar["sigma"] == artifacts.plan.sigma
        assert sidecar["per_hop_noise_std"] == artifacts.per_hop_noise_std
        loaded = np.array([[float(v) for v in line.split(",")] for line in rows])
        assert np.array_equal(loaded, artifacts.x_k_final)
