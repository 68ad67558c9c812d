"""Stream aggregation weights and the reasoning blends."""

from __future__ import annotations

import numpy as np
import pytest

from ssrn import autodiff as ad
from ssrn import siamese as si
from ssrn.errors import ValidationError


class TestAggregate:
    def test_rows_stochastic(self):
        rng = np.random.default_rng(60)
        anchor = rng.standard_normal((6, 4))
        streams = [rng.standard_normal((6, 4)) for _ in range(3)]
        w = si.aggregate(anchor, streams)
        assert w.shape == (6, 3)
        np.testing.assert_allclose(np.asarray(w).sum(axis=1), 1.0, atol=1e-12)

    def test_single_stream_weight_is_one(self):
        rng = np.random.default_rng(61)
        anchor = rng.standard_normal((5, 3))
        w = si.aggregate(anchor, [rng.standard_normal((5, 3))])
        np.testing.assert_array_equal(np.asarray(w), np.ones((5, 1)))

    def test_identical_streams_get_equal_weight(self):
        rng = np.random.default_rng(62)
        anchor = rng.standard_normal((4, 3))
        s = rng.standard_normal((4, 3))
        w = si.aggregate(anchor, [s, s.copy(), s.copy(), s.copy()])
        np.testing.assert_allclose(np.asarray(w), 0.25, atol=1e-15)

    def test_more_similar_stream_weighs_more(self):
        anchor = np.tile([[1.0, 0.0]], (3, 1))
        near = np.tile([[1.0, 0.1]], (3, 1))
        far = np.tile([[-1.0, 0.5]], (3, 1))
        w = np.asarray(si.aggregate(anchor, [near, far]))
        assert (w[:, 0] > w[:, 1]).all()

    def test_uniform_weights(self):
        w = si.uniform_weights(5, 4)
        np.testing.assert_array_equal(w, np.full((5, 4), 0.25))
        with pytest.raises(ValidationError):
            si.uniform_weights(5, 0)

    def test_empty_streams_rejected(self):
        with pytest.raises(ValidationError):
            si.aggregate(np.ones((3, 2)), [])


class TestReason:
    def test_alpha_extremes(self):
        rng = np.random.default_rng(63)
        d = 4
        params = si.init_siamese(rng, d, "residual")
        anchor = rng.standard_normal((5, d))
        streams = [rng.standard_normal((5, d)) for _ in range(2)]
        weights = si.uniform_weights(5, 2)
        # alpha = 0: pure anchor projection
        out0 = si.reason(anchor, streams, weights, params, 0.0)
        np.testing.assert_allclose(
            np.asarray(out0), anchor @ params["siamese.w2"], atol=1e-12
        )
        # alpha = 1: pure pooled streams
        out1 = si.reason(anchor, streams, weights, params, 1.0)
        pooled = 0.5 * (streams[0] @ params["siamese.w1"]) + 0.5 * (
            streams[1] @ params["siamese.w1"]
        )
        np.testing.assert_allclose(np.asarray(out1), pooled, atol=1e-12)

    def test_blend_is_linear_in_alpha(self):
        rng = np.random.default_rng(64)
        d = 3
        params = si.init_siamese(rng, d, "residual")
        anchor = rng.standard_normal((4, d))
        streams = [rng.standard_normal((4, d))]
        weights = si.uniform_weights(4, 1)
        o0 = np.asarray(si.reason(anchor, streams, weights, params, 0.0))
        o1 = np.asarray(si.reason(anchor, streams, weights, params, 1.0))
        oh = np.asarray(si.reason(anchor, streams, weights, params, 0.5))
        np.testing.assert_allclose(oh, 0.5 * o0 + 0.5 * o1, atol=1e-12)

    def test_alpha_validation(self):
        rng = np.random.default_rng(65)
        params = si.init_siamese(rng, 3, "residual")
        with pytest.raises(ValidationError):
            si.reason(np.ones((2, 3)), [np.ones((2, 3))], si.uniform_weights(2, 1),
                      params, 1.5)

    def test_concat_variant_shape_and_value(self):
        rng = np.random.default_rng(66)
        d = 4
        params = si.init_siamese(rng, d, "concat")
        anchor = rng.standard_normal((5, d))
        streams = [rng.standard_normal((5, d)) for _ in range(2)]
        weights = si.uniform_weights(5, 2)
        out = np.asarray(si.reason_concat(anchor, streams, weights, params))
        assert out.shape == (5, d)
        pooled = 0.5 * streams[0] + 0.5 * streams[1]
        expected = np.concatenate([anchor, pooled], axis=1) @ params["siamese.wc"]
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_init_mode_validation(self):
        with pytest.raises(ValidationError):
            si.init_siamese(np.random.default_rng(0), 4, "dense")

    def test_gradients_through_aggregation_and_reason(self):
        rng = np.random.default_rng(67)
        d = 3
        base = si.init_siamese(rng, d, "residual")
        anchor = rng.standard_normal((4, d))
        streams = [rng.standard_normal((4, d)) for _ in range(2)]
        params = dict(base)
        params["anchor"] = anchor
        params["s0"] = streams[0]
        params["s1"] = streams[1]

        def builder(env):
            strs = [env["s0"], env["s1"]]
            w = si.aggregate(env["anchor"], strs)
            out = si.reason(env["anchor"], strs, w, env, 0.7)
            return ad.sum_all(ad.mul(out, out))

        report = ad.grad_check(builder, params, eps=1e-5, tolerance=1e-4)
        assert report.passed, report.summary_lines()
