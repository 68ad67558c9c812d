"""Aggregation and reasoning across the siamese streams.

After fusion every stream is an MxD map. Per sampled position, the anchor is
compared against each siamese stream by cosine similarity and the K scores are
softmaxed into row-stochastic weights C (MxK). Reasoning then blends the
weighted siamese evidence back into the anchor; the residual form keeps the
anchor on its own projection so the blend cannot wash it out:

    blended = alpha * sum_k C[:, k] * (Fs_k W1) + (1 - alpha) * Fa W2

The plain-average / concatenation variants exist as ablation switches: uniform
weights kill the learned aggregation, and the concat form replaces the
residual blend with [Fa; sum_k C[:, k] * Fs_k] W.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ValidationError


def init_siamese(
    rng: np.random.Generator, d: int, reason_mode: str = "residual"
) -> dict[str, np.ndarray]:
    if reason_mode == "residual":
        return {
            "siamese.w1": rng.standard_normal((d, d)) / np.sqrt(d),
            "siamese.w2": rng.standard_normal((d, d)) / np.sqrt(d),
        }
    if reason_mode == "concat":
        return {
            "siamese.wc": rng.standard_normal((2 * d, d)) / np.sqrt(2 * d),
        }
    raise ValidationError(
        f"init_siamese: reason_mode must be 'residual' or 'concat', got {reason_mode!r}"
    )


def aggregate(anchor, streams: list):
    """Per-position softmax over anchor-vs-stream cosine scores: MxK, rows sum to 1."""
    if not streams:
        raise ValidationError("aggregate: need at least one siamese stream")
    scores = [ad.cosine_rows(anchor, s) for s in streams]
    packed = scores[0]
    for col in scores[1:]:
        packed = ad.concat_cols(packed, col)
    # K = 1 degenerates gracefully: softmax over one column is exactly 1.
    return ad.softmax_rows(packed)


def uniform_weights(m: int, k: int) -> np.ndarray:
    """Aggregation weights with the scoring disabled: every stream gets 1/K."""
    if k < 1:
        raise ValidationError(f"uniform_weights: need k >= 1, got {k}")
    return np.full((m, k), 1.0 / k)


def _weighted_sum(streams: list, weights):
    total = None
    for idx, s in enumerate(streams):
        term = ad.row_scale(ad.slice_cols(weights, idx, idx + 1), s)
        total = term if total is None else ad.add(total, term)
    return total


def reason(anchor, streams: list, weights, params, alpha: float):
    """Residual blend of projected siamese evidence into the projected anchor."""
    if not streams:
        raise ValidationError("reason: need at least one siamese stream")
    alpha = float(alpha)
    if not (0.0 <= alpha <= 1.0):
        raise ValidationError(f"reason: alpha must lie in [0, 1], got {alpha}")
    projected = [ad.matmul(s, params["siamese.w1"]) for s in streams]
    pooled = _weighted_sum(projected, weights)
    own = ad.matmul(anchor, params["siamese.w2"])
    return ad.add(ad.scale(pooled, alpha), ad.scale(own, 1.0 - alpha))


def reason_concat(anchor, streams: list, weights, params):
    """Ablation variant: concatenate anchor with pooled streams, project to D."""
    if not streams:
        raise ValidationError("reason_concat: need at least one siamese stream")
    pooled = _weighted_sum(streams, weights)
    return ad.matmul(ad.concat_cols(anchor, pooled), params["siamese.wc"])
