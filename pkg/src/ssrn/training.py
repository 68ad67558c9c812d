"""Adam optimisation, the training loop, and evaluation.

Training is deterministic given a config: the seed fixes the dataset, the
parameter initialisation, and the batch order, and backward() accumulates in
a fixed order, so two runs of the same config produce bit-identical loss
logs and parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import heads as heads_mod
from .config import TrainConfig
from .data import GroundingSample, assemble_dataset, spec_from_config, synth_dataset
from .errors import ValidationError
from .metrics import IOU_THRESHOLDS, RECALL_RANKS, MetricsReport, iou, recall_at
from .model import GroundingNetwork
from .sampling import unmap_index


@dataclass
class AdamState:
    """First/second moment estimates per parameter plus the shared step count."""

    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        step=0,
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
    )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update, in place on the parameter arrays.

    Parameters without a gradient entry are treated as zero-gradient: their
    moments keep decaying but a never-touched parameter never moves.
    """
    if lr <= 0.0:
        raise ValidationError(f"adam_step: lr must be positive, got {lr}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, theta in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(theta)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        theta -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class SampleEval:
    """Decoded predictions for one sample, in dense-frame time."""

    sample_id: str
    truth: tuple[float, float]
    ranked_hard: list[tuple[float, float]]
    ranked_refined: list[tuple[float, float]]
    predictions: list[heads_mod.SegmentPrediction]
    span_loss: float
    offset_loss: float


def evaluate(
    net: GroundingNetwork,
    samples: list[GroundingSample],
    top_n: int = 5,
    decode: str | None = None,
) -> tuple[MetricsReport, list[SampleEval]]:
    """Score every sample with the current parameters.

    The recall table and mean IoU use the requested decode ("refined" undoes
    quantisation with the offset head, "hard" does not); both boundary-error
    columns are always reported so the recovered bias is visible directly.
    """
    if not samples:
        raise ValidationError("evaluate: no samples")
    decode = decode or net.cfg.decode_mode
    if decode not in ("refined", "hard"):
        raise ValidationError(f"evaluate: decode must be refined|hard, got {decode!r}")
    evals: list[SampleEval] = []
    for sample in samples:
        out = net.forward(sample, net.params)
        bundle = heads_mod.compute_losses(
            out.dists, out.offsets, sample.labels, net.cfg.effective_lam
        )
        preds = heads_mod.decode_top_n(out.dists, top_n)
        hard_iv: list[tuple[float, float]] = []
        refined_iv: list[tuple[float, float]] = []
        for p in preds:
            heads_mod.refine_prediction(p, out.offsets)
            hard = (
                unmap_index(p.hard_start, sample.plan),
                unmap_index(p.hard_end, sample.plan),
            )
            refined = (
                unmap_index(p.refined_start, sample.plan),
                unmap_index(p.refined_end, sample.plan),
            )
            hard_iv.append(hard)
            refined_iv.append(refined)
            p.time_start, p.time_end = refined if decode == "refined" else hard
        evals.append(
            SampleEval(
                sample_id=sample.sample_id,
                truth=sample.truth,
                ranked_hard=hard_iv,
                ranked_refined=refined_iv,
                predictions=preds,
                span_loss=bundle.span_value,
                offset_loss=bundle.offset_value,
            )
        )
    truths = [e.truth for e in evals]
    chosen = [
        e.ranked_refined if decode == "refined" else e.ranked_hard for e in evals
    ]
    recalls = {
        (n, thr): recall_at(chosen, truths, n, thr)
        for n in RECALL_RANKS
        for thr in IOU_THRESHOLDS
    }
    top1 = [c[0] for c in chosen]
    top1_hard = [e.ranked_hard[0] for e in evals]
    top1_refined = [e.ranked_refined[0] for e in evals]

    def mean_err(pairs):
        return float(
            np.mean(
                [
                    (abs(p[0] - t[0]) + abs(p[1] - t[1])) / 2.0
                    for p, t in zip(pairs, truths)
                ]
            )
        )

    report = MetricsReport(
        count=len(evals),
        recalls=recalls,
        mean_iou=float(np.mean([iou(p, t) for p, t in zip(top1, truths)])),
        mean_iou_hard=float(
            np.mean([iou(p, t) for p, t in zip(top1_hard, truths)])
        ),
        boundary_error=mean_err(top1_refined),
        boundary_error_hard=mean_err(top1_hard),
        decode=decode,
        extras={
            "span_loss": float(np.mean([e.span_loss for e in evals])),
            "offset_loss": float(np.mean([e.offset_loss for e in evals])),
        },
    )
    return report, evals


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    config: TrainConfig
    params: dict[str, np.ndarray]
    loss_rows: list[tuple[int, float, float, float]]
    eval_rows: list[tuple[int, MetricsReport]] = field(default_factory=list)
    steps_run: int = 0
    stopped_early: bool = False
    final_report: MetricsReport | None = None
    final_span_loss: float = math.nan


def build_dataset(cfg: TrainConfig) -> list[GroundingSample]:
    """Assembled samples for a config: from disk when paths are set, else
    synthetic. Disk loading lives in storage.py; imported here lazily to keep
    module dependencies one-way."""
    if cfg.features_dir is not None:
        from .storage import load_dataset

        raws = load_dataset(cfg.features_dir, cfg.annotations)
    else:
        raws = synth_dataset(spec_from_config(cfg))
    return assemble_dataset(raws, cfg)


def _stop_now(cfg: TrainConfig, report: MetricsReport) -> bool:
    if cfg.stop_recall is None and cfg.stop_span_loss is None:
        return False
    if cfg.stop_recall is not None:
        if report.recalls[(1, 0.7)] < cfg.stop_recall:
            return False
    if cfg.stop_span_loss is not None:
        if report.extras["span_loss"] > cfg.stop_span_loss:
            return False
    return True


def train(
    cfg: TrainConfig,
    dataset: list[GroundingSample] | None = None,
    log=None,
) -> TrainResult:
    """Run the full loop: batches, Adam, periodic evaluation, early stop.

    `log` is called with one formatted line per step and per evaluation;
    pass print for progress on a terminal.
    """
    cfg.validate()
    samples = build_dataset(cfg) if dataset is None else dataset
    if not samples:
        raise ValidationError("train: empty dataset")
    net = GroundingNetwork(cfg)
    adam = adam_init(net.params)
    order_rng = np.random.default_rng(cfg.seed + 1)
    result = TrainResult(config=cfg, params=net.params, loss_rows=[])
    step = 0
    stop = False
    while not stop and step < cfg.max_steps:
        perm = order_rng.permutation(len(samples))
        for lo in range(0, len(perm), cfg.batch_size):
            batch = perm[lo : lo + cfg.batch_size]
            step += 1
            grad_sum: dict[str, np.ndarray] = {}
            span_sum = off_sum = total_sum = 0.0
            for idx in batch:
                env = net.leaves()
                _, bundle = net.loss(samples[idx], env)
                if not math.isfinite(bundle.total_value):
                    raise ValidationError(
                        f"train: non-finite loss {bundle.total_value} at step {step}"
                    )
                span_sum += bundle.span_value
                off_sum += bundle.offset_value
                total_sum += bundle.total_value
                for name, g in ad.backward(bundle.total).items():
                    if name in grad_sum:
                        grad_sum[name] += g
                    else:
                        grad_sum[name] = g
            nb = float(len(batch))
            grads = {k: v / nb for k, v in grad_sum.items()}
            adam_step(net.params, grads, adam, cfg.lr)
            row = (step, span_sum / nb, off_sum / nb, total_sum / nb)
            result.loss_rows.append(row)
            if log:
                log(
                    f"step {row[0]:5d}  span {row[1]:.4f}  offset {row[2]:.4f}"
                    f"  total {row[3]:.4f}"
                )
            if step % cfg.eval_every == 0 or step >= cfg.max_steps:
                report, _ = evaluate(net, samples)
                result.eval_rows.append((step, report))
                if log:
                    log(
                        f"eval  {step:5d}  R@1,IoU=0.7 {report.recalls[(1, 0.7)]:.1f}"
                        f"  span_loss {report.extras['span_loss']:.4f}"
                    )
                if _stop_now(cfg, report):
                    result.stopped_early = True
                    stop = True
            if stop or step >= cfg.max_steps:
                break
    final_report, _ = evaluate(net, samples)
    result.final_report = final_report
    result.final_span_loss = final_report.extras["span_loss"]
    result.steps_run = step
    return result
