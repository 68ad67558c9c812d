"""Adam against a textbook reference, evaluation, and the training loop."""

from __future__ import annotations

import math
import types

import numpy as np
import pytest

import ssrn.model
from ssrn.config import TrainConfig
from ssrn.errors import ValidationError
from ssrn.metrics import IOU_THRESHOLDS, RECALL_RANKS
from ssrn.model import GroundingNetwork
from ssrn.training import adam_init, adam_step, build_dataset, evaluate, train


def reference_adam(params, grad_seq, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Out-of-place textbook Adam, written independently of the module."""
    theta = {k: v.copy() for k, v in params.items()}
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(v) for k, v in params.items()}
    for t, grads in enumerate(grad_seq, start=1):
        for name in theta:
            g = grads.get(name, np.zeros_like(theta[name]))
            m[name] = b1 * m[name] + (1.0 - b1) * g
            v[name] = b2 * v[name] + (1.0 - b2) * (g * g)
            m_hat = m[name] / (1.0 - b1**t)
            v_hat = v[name] / (1.0 - b2**t)
            theta[name] = theta[name] - lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta


def train_cfg(**overrides) -> TrainConfig:
    base = dict(
        m=6, k=1, d=4, d_raw=5, d_emb=4, lr=1e-3,
        batch_size=4, max_steps=3, eval_every=3,
        synth_count=4, synth_t_min=24, synth_t_max=40,
        synth_query_min=3, synth_query_max=4,
    )
    base.update(overrides)
    return TrainConfig(**base)


class TestAdam:
    def test_matches_reference_over_five_steps(self):
        rng = np.random.default_rng(11)
        params = {"a": rng.standard_normal((3, 4)), "b": rng.standard_normal((2, 2))}
        grad_seq = [
            {"a": rng.standard_normal((3, 4)), "b": rng.standard_normal((2, 2))}
            for _ in range(5)
        ]
        expected = reference_adam(params, grad_seq, lr=0.01)
        mine = {k: v.copy() for k, v in params.items()}
        state = adam_init(mine)
        for grads in grad_seq:
            adam_step(mine, grads, state, lr=0.01)
        for name in params:
            np.testing.assert_array_equal(mine[name], expected[name])
        assert state.step == 5

    def test_first_step_size_is_lr(self):
        # with fresh moments the bias-corrected update is lr * g / (|g| + eps)
        theta = {"w": np.array([[2.0, -3.0]])}
        before = theta["w"].copy()
        adam_step(theta, {"w": np.array([[0.5, -4.0]])}, adam_init(theta), lr=0.01)
        np.testing.assert_allclose(np.abs(before - theta["w"]), 0.01, rtol=1e-6)
        assert theta["w"][0, 0] < before[0, 0]  # moved against the gradient
        assert theta["w"][0, 1] > before[0, 1]

    def test_missing_gradient_leaves_parameter_alone(self):
        theta = {"seen": np.ones((2, 2)), "unseen": np.ones((2, 2))}
        frozen = theta["unseen"].copy()
        state = adam_init(theta)
        for _ in range(3):
            adam_step(theta, {"seen": np.ones((2, 2))}, state, lr=0.1)
        np.testing.assert_array_equal(theta["unseen"], frozen)
        assert not np.array_equal(theta["seen"], np.ones((2, 2)))

    def test_updates_in_place(self):
        theta = {"w": np.ones((1, 1))}
        alias = theta["w"]
        adam_step(theta, {"w": np.ones((1, 1))}, adam_init(theta), lr=0.1)
        assert theta["w"] is alias

    def test_lr_validation(self):
        theta = {"w": np.ones((1, 1))}
        with pytest.raises(ValidationError):
            adam_step(theta, {}, adam_init(theta), lr=0.0)
        with pytest.raises(ValidationError):
            adam_step(theta, {}, adam_init(theta), lr=-1.0)


class TestEvaluate:
    def test_report_structure(self):
        cfg = train_cfg()
        samples = build_dataset(cfg)
        net = GroundingNetwork(cfg)
        report, evals = evaluate(net, samples, top_n=5)
        assert report.count == len(samples) == len(evals)
        assert set(report.recalls) == {
            (n, thr) for n in RECALL_RANKS for thr in IOU_THRESHOLDS
        }
        assert all(0.0 <= v <= 100.0 for v in report.recalls.values())
        assert 0.0 <= report.mean_iou <= 1.0
        assert report.boundary_error >= 0.0
        assert set(report.extras) == {"span_loss", "offset_loss"}
        for ev in evals:
            assert len(ev.ranked_hard) == len(ev.ranked_refined) == 5

    def test_decode_override(self):
        cfg = train_cfg()
        samples = build_dataset(cfg)
        net = GroundingNetwork(cfg)
        hard, _ = evaluate(net, samples, decode="hard")
        refined, _ = evaluate(net, samples, decode="refined")
        assert hard.decode == "hard" and refined.decode == "refined"
        # the hard decode is frozen to grid points regardless of request
        np.testing.assert_array_equal(hard.mean_iou_hard, refined.mean_iou_hard)

    def test_validation(self):
        cfg = train_cfg()
        net = GroundingNetwork(cfg)
        with pytest.raises(ValidationError):
            evaluate(net, [])
        with pytest.raises(ValidationError):
            evaluate(net, build_dataset(cfg), decode="fuzzy")


class TestTrainLoop:
    def test_runs_and_logs(self):
        cfg = train_cfg()
        lines = []
        result = train(cfg, log=lines.append)
        assert result.steps_run == 3
        assert len(result.loss_rows) == 3
        assert result.loss_rows[0][0] == 1
        assert all(math.isfinite(r[3]) for r in result.loss_rows)
        assert result.final_report is not None
        assert result.eval_rows and result.eval_rows[0][0] == 3
        assert any(line.startswith("step") for line in lines)
        assert any(line.startswith("eval") for line in lines)

    def test_deterministic_across_reruns(self):
        cfg = train_cfg()
        a = train(cfg)
        b = train(cfg)
        assert a.loss_rows == b.loss_rows
        for name in a.params:
            np.testing.assert_array_equal(a.params[name], b.params[name])
        assert a.final_report.recalls == b.final_report.recalls

    def test_loss_decreases_on_tiny_overfit(self):
        cfg = train_cfg(synth_count=2, batch_size=2, max_steps=30, eval_every=30,
                        lr=5e-3)
        result = train(cfg)
        first = np.mean([r[3] for r in result.loss_rows[:5]])
        last = np.mean([r[3] for r in result.loss_rows[-5:]])
        assert last < first

    def test_early_stop_fires_when_thresholds_are_trivial(self):
        cfg = train_cfg(stop_recall=0.0, stop_span_loss=1e9, eval_every=1,
                        max_steps=10)
        result = train(cfg)
        assert result.stopped_early
        assert result.steps_run == 1

    def test_no_stop_when_recall_unattainable(self):
        cfg = train_cfg(stop_recall=101.0, stop_span_loss=1e9, eval_every=1)
        result = train(cfg)
        assert not result.stopped_early
        assert result.steps_run == cfg.max_steps

    def test_non_finite_loss_raises(self, monkeypatch):
        def bad_loss(self, sample, env):
            return None, types.SimpleNamespace(
                total_value=math.nan, span_value=0.0, offset_value=0.0, total=None
            )

        monkeypatch.setattr(ssrn.model.GroundingNetwork, "loss", bad_loss)
        with pytest.raises(ValidationError, match="non-finite"):
            train(train_cfg())

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValidationError):
            train(train_cfg(), dataset=[])
