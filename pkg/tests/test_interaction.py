"""Co-attention identities and fusion behaviour."""

from __future__ import annotations

import numpy as np
import pytest

from ssrn import autodiff as ad
from ssrn import encoders as enc
from ssrn import interaction as ia


def tiny_params(rng, d):
    return ia.init_interaction(rng, d)


class TestSimilarity:
    def test_identity_projection_oracle(self):
        video = np.array([[1.0, 2.0], [3.0, 4.0], [0.0, 1.0]])
        query = np.array([[1.0, 0.0], [1.0, 1.0]])
        sim = ia.similarity(video, query, np.eye(2))
        np.testing.assert_array_equal(sim, video @ query.T)
        assert sim.shape == (3, 2)

    def test_projection_applied_once(self):
        rng = np.random.default_rng(50)
        video = rng.standard_normal((4, 3))
        query = rng.standard_normal((2, 3))
        ws = rng.standard_normal((3, 3))
        np.testing.assert_allclose(
            ia.similarity(video, query, ws), video @ (query @ ws).T, atol=1e-12
        )


class TestCoattention:
    def test_single_token_collapses_row_attention(self):
        # with one query token every frame attends to it fully: A repeats the
        # projected token, and B averages frames by the column attention
        rng = np.random.default_rng(51)
        video = rng.standard_normal((5, 4))
        query = rng.standard_normal((1, 4))
        ws = rng.standard_normal((4, 4))
        sim = ia.similarity(video, query, ws)
        a, b = ia.coattend(video, query, sim, ws)
        projected = query @ ws
        np.testing.assert_allclose(a, np.tile(projected, (5, 1)), atol=1e-12)
        col = np.exp(sim - sim.max())
        col = col / col.sum()
        expected_b = np.tile((col * video).sum(axis=0, keepdims=True), (5, 1))
        np.testing.assert_allclose(b, expected_b, atol=1e-12)

    def test_attention_is_convex(self):
        # every row of A lies inside the convex hull of projected tokens:
        # its coordinates against them sum to one (verified via row softmax)
        rng = np.random.default_rng(52)
        video = rng.standard_normal((6, 4))
        query = rng.standard_normal((3, 4))
        ws = rng.standard_normal((4, 4))
        sim = ia.similarity(video, query, ws)
        rows = ad.softmax_rows(sim)
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12)
        a, _ = ia.coattend(video, query, sim, ws)
        np.testing.assert_allclose(a, rows @ (query @ ws), atol=1e-12)

    def test_b_mixes_video_rows_only(self):
        # B = R C^T V: scaling the query leaves B's row space inside span(V)
        rng = np.random.default_rng(53)
        video = rng.standard_normal((5, 3))
        query = rng.standard_normal((2, 3))
        ws = np.eye(3)
        sim = ia.similarity(video, query, ws)
        _, b = ia.coattend(video, query, sim, ws)
        mix = ad.softmax_rows(sim) @ ad.softmax_cols(sim).T
        np.testing.assert_allclose(b, mix @ video, atol=1e-12)
        np.testing.assert_allclose(mix.sum(axis=1), 1.0, atol=1e-12)


class TestFusion:
    def test_shapes(self):
        rng = np.random.default_rng(54)
        d = 6
        params = tiny_params(rng, d)
        video = rng.standard_normal((4, d))
        query = rng.standard_normal((3, d))
        fused = ia.interact(video, query, params, "anchor")
        assert fused.features.shape == (4, d)
        assert fused.source == "anchor"

    def test_gradients_through_whole_block(self):
        rng = np.random.default_rng(55)
        d = 4
        params = tiny_params(rng, d)
        video = rng.standard_normal((3, d))
        query = rng.standard_normal((2, d))

        def builder(env):
            out = ia.interact(video, query, env, "anchor").features
            return ad.sum_all(ad.mul(out, out))

        report = ad.grad_check(builder, params, eps=1e-5, tolerance=1e-4)
        assert report.passed, report.summary_lines()

    def test_query_influences_output(self):
        rng = np.random.default_rng(56)
        d = 6
        params = tiny_params(rng, d)
        video = rng.standard_normal((4, d))
        q1 = rng.standard_normal((3, d))
        q2 = rng.standard_normal((3, d))
        f1 = ia.interact(video, q1, params, "anchor").features
        f2 = ia.interact(video, q2, params, "anchor").features
        assert not np.allclose(f1, f2)
