"""Composed network: parameter coverage, ablation switches, decode modes."""

from __future__ import annotations

import numpy as np
import pytest

from ssrn.config import TrainConfig
from ssrn.data import assemble_sample, spec_from_config, synth_dataset
from ssrn.errors import ValidationError
from ssrn.model import GroundingNetwork, init_params
from ssrn.sampling import unmap_index


def tiny_cfg(**overrides) -> TrainConfig:
    base = dict(
        m=6, k=2, d=8, d_raw=6, d_emb=5,
        synth_count=2, synth_t_min=24, synth_t_max=40,
        synth_query_min=3, synth_query_max=4,
        batch_size=2, max_steps=2, eval_every=1,
    )
    base.update(overrides)
    return TrainConfig(**base)


def tiny_sample(cfg: TrainConfig, k: int | None = None):
    raw = synth_dataset(spec_from_config(cfg))[0]
    return assemble_sample(
        raw,
        m=cfg.m,
        k=cfg.k if k is None else k,
        offset_mode=cfg.offset_mode,
        d_emb=cfg.d_emb,
    )


class TestInitParams:
    def test_full_branch_coverage(self):
        params = init_params(tiny_cfg())
        names = set(params)
        for prefix in ("video_enc.", "query_enc.", "interaction.", "heads."):
            assert any(n.startswith(prefix) for n in names)
        assert "siamese.w1" in names and "siamese.w2" in names
        assert "siamese.wc" not in names

    def test_concat_reasoning_params(self):
        params = init_params(tiny_cfg(skr=False))
        assert "siamese.wc" in params
        assert "siamese.w1" not in params

    def test_anchor_only_drops_siamese(self):
        params = init_params(tiny_cfg(use_siamese=False, k=0))
        assert not any(n.startswith("siamese.") for n in params)

    def test_seed_controls_values(self):
        a = init_params(tiny_cfg(), seed=1)
        b = init_params(tiny_cfg(), seed=1)
        c = init_params(tiny_cfg(), seed=2)
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])
        assert any(not np.array_equal(a[n], c[n]) for n in a)


class TestForward:
    def test_shapes(self):
        cfg = tiny_cfg()
        net = GroundingNetwork(cfg)
        out = net.forward(tiny_sample(cfg), net.params)
        assert out.dists.start_probs.shape == (cfg.m,)
        assert out.dists.end_probs.shape == (cfg.m,)
        assert out.offsets.start_values.shape == (cfg.m,)
        assert out.offsets.end_values.shape == (cfg.m,)

    def test_aggregation_weights_row_stochastic(self):
        cfg = tiny_cfg()
        net = GroundingNetwork(cfg)
        out = net.forward(tiny_sample(cfg), net.params)
        w = np.asarray(out.weights)
        assert w.shape == (cfg.m, cfg.k)
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)

    def test_ska_off_gives_uniform_weights(self):
        cfg = tiny_cfg(ska=False)
        net = GroundingNetwork(cfg)
        out = net.forward(tiny_sample(cfg), net.params)
        np.testing.assert_array_equal(np.asarray(out.weights), 0.5)

    def test_anchor_only_has_no_weights(self):
        cfg = tiny_cfg(use_siamese=False, k=0)
        net = GroundingNetwork(cfg)
        out = net.forward(tiny_sample(cfg), net.params)
        assert out.weights is None

    def test_ablations_change_output(self):
        outputs = []
        for overrides in ({}, {"ska": False}, {"skr": False}, {"use_siamese": False}):
            cfg = tiny_cfg(**overrides)
            net = GroundingNetwork(cfg, params=init_params(tiny_cfg(skr=False)) | init_params(tiny_cfg()))
            k = cfg.k if cfg.use_siamese else 2  # same sample works for every switch
            out = net.forward(tiny_sample(cfg, k=k), net.params)
            outputs.append(out.dists.start_probs)
        for i in range(len(outputs)):
            for j in range(i + 1, len(outputs)):
                assert not np.array_equal(outputs[i], outputs[j])

    def test_graph_and_value_paths_agree(self):
        cfg = tiny_cfg()
        net = GroundingNetwork(cfg)
        sample = tiny_sample(cfg)
        value_out = net.forward(sample, net.params)
        graph_out = net.forward(sample, net.leaves())
        np.testing.assert_array_equal(
            value_out.dists.start_probs, graph_out.dists.start_probs
        )
        np.testing.assert_array_equal(
            value_out.offsets.end_values, graph_out.offsets.end_values
        )

    def test_missing_streams_rejected(self):
        cfg = tiny_cfg()
        net = GroundingNetwork(cfg)
        bare = tiny_sample(cfg, k=0)
        with pytest.raises(ValidationError):
            net.forward(bare, net.params)

    def test_loss_bundle_finite(self):
        cfg = tiny_cfg()
        net = GroundingNetwork(cfg)
        env = net.leaves()
        _, bundle = net.loss(tiny_sample(cfg), env)
        assert np.isfinite(bundle.total_value)
        assert bundle.total_value >= bundle.span_value >= 0.0


class TestPredict:
    def test_prediction_list(self):
        cfg = tiny_cfg()
        net = GroundingNetwork(cfg)
        sample = tiny_sample(cfg)
        preds = net.predict(sample, top_n=4)
        assert len(preds) == 4
        for p in preds:
            assert 0 <= p.hard_start <= p.hard_end <= cfg.m - 1
            assert p.refined_start is not None
            assert p.time_start is not None

    def test_refined_decode_uses_offsets(self):
        cfg = tiny_cfg()  # soft_label=True by default
        net = GroundingNetwork(cfg)
        sample = tiny_sample(cfg)
        p = net.predict(sample, top_n=1)[0]
        assert p.time_start == unmap_index(p.refined_start, sample.plan)
        assert p.time_end == unmap_index(p.refined_end, sample.plan)

    def test_hard_decode_sticks_to_grid(self):
        cfg = tiny_cfg(soft_label=False)
        net = GroundingNetwork(cfg)
        sample = tiny_sample(cfg)
        p = net.predict(sample, top_n=1)[0]
        assert p.time_start == unmap_index(p.hard_start, sample.plan)
        assert p.time_end == unmap_index(p.hard_end, sample.plan)

    def test_deterministic(self):
        cfg = tiny_cfg()
        net = GroundingNetwork(cfg)
        sample = tiny_sample(cfg)
        a = net.predict(sample, top_n=3)
        b = net.predict(sample, top_n=3)
        assert [(p.score, p.time_start, p.time_end) for p in a] == [
            (p.score, p.time_start, p.time_end) for p in b
        ]
