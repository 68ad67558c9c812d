"""Interval overlap metrics and the evaluation report container."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

IOU_THRESHOLDS = (0.3, 0.5, 0.7)
RECALL_RANKS = (1, 5)


def iou(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Temporal intersection over union of two [start, end] intervals.

    Degenerate case: if the union has length zero (two identical points),
    identical intervals count as a perfect match, disjoint points as zero.
    """
    a0, a1 = float(a[0]), float(a[1])
    b0, b1 = float(b[0]), float(b[1])
    if a1 < a0 or b1 < b0:
        raise ValidationError(f"iou: interval ends before it starts: {a}, {b}")
    inter = min(a1, b1) - max(a0, b0)
    union = max(a1, b1) - min(a0, b0)
    if union <= 0.0:
        return 1.0 if (a0 == b0 and a1 == b1) else 0.0
    return max(0.0, inter) / union


def recall_at(
    predictions: list[list[tuple[float, float]]],
    truths: list[tuple[float, float]],
    n: int,
    threshold: float,
) -> float:
    """Percentage of samples whose top-n predictions contain at least one
    interval with iou >= threshold against the truth.

    predictions[i] is the ranked list for sample i; entries beyond rank n are
    ignored, shorter lists are used as-is.
    """
    if n < 1:
        raise ValidationError(f"recall_at: n must be >= 1, got {n}")
    if not (0.0 < threshold <= 1.0):
        raise ValidationError(
            f"recall_at: threshold must lie in (0, 1], got {threshold}"
        )
    if len(predictions) != len(truths):
        raise ValidationError(
            f"recall_at: {len(predictions)} prediction lists for {len(truths)} truths"
        )
    if not truths:
        raise ValidationError("recall_at: no samples")
    hits = 0
    for ranked, truth in zip(predictions, truths):
        if any(iou(p, truth) >= threshold for p in ranked[:n]):
            hits += 1
    return 100.0 * hits / len(truths)


@dataclass
class MetricsReport:
    """Recall table plus mean localisation quality for one evaluation pass.

    recalls maps (n, threshold) to a percentage. Boundary errors are mean
    absolute errors in dense-frame units, averaged over both boundaries of
    the top-1 prediction; the hard variants use the quantised decode before
    offset refinement, so the gap between the two columns is the recovered
    rounding bias.
    """

    count: int
    recalls: dict[tuple[int, float], float]
    mean_iou: float
    mean_iou_hard: float
    boundary_error: float
    boundary_error_hard: float
    decode: str = "refined"
    extras: dict[str, float] = field(default_factory=dict)

    def table_rows(self) -> list[tuple[str, float]]:
        rows = [
            (f"R@{n},IoU={m:g}", self.recalls[(n, m)])
            for n in RECALL_RANKS
            for m in IOU_THRESHOLDS
            if (n, m) in self.recalls
        ]
        rows.append(("mIoU", self.mean_iou))
        rows.append(("mIoU(hard)", self.mean_iou_hard))
        rows.append(("boundary_error", self.boundary_error))
        rows.append(("boundary_error(hard)", self.boundary_error_hard))
        return rows
