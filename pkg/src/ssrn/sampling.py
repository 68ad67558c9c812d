"""Frame sampling plans and boundary label construction.

A video with T dense frames is represented by M sampled frames. Anchor frame
i comes from dense index floor(i*T/M); each of the K siamese streams shifts
the anchors right by a small per-stream offset so the network also sees the
frames a rounding-based sampler skips.

Boundaries move with the frames. A dense boundary tau maps to the fractional
sampled position tau*M/T; flooring that gives the hard (trainable) index and
loses up to one stride of precision. The fractional parts are kept as
regression targets so a trained offset head can undo the loss: the start
target is hard_start + 1 - soft_start in (0, 1], the end target is
soft_end - hard_end + 1 in [1, 2). Substituting the targets into
refine() in heads.py recovers the soft positions exactly, which is the
identity the round-trip tests pin down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .metrics import iou

OFFSET_MODES = ("adjacent", "spread")


@dataclass(frozen=True)
class SamplingPlan:
    """How one video is reduced to M frames with K shifted companion streams."""

    t: int
    m: int
    k: int
    offsets: tuple[int, ...]

    @property
    def stride(self) -> float:
        return self.t / self.m


def make_plan(t: int, m: int, k: int, mode: str = "adjacent") -> SamplingPlan:
    """Build a sampling plan for a T-frame video.

    Offsets are whole dense frames, at least 1 and at most floor(stride) so a
    shifted stream never reaches past the next anchor. "adjacent" uses
    1, 2, ..., K (clamped); "spread" distributes the K offsets evenly across
    one stride. For stride < K+1 both modes saturate and neighbouring streams
    may coincide.
    """
    t, m, k = int(t), int(m), int(k)
    if m < 2:
        raise ValidationError(f"make_plan: need at least 2 sampled frames, got m={m}")
    if t < m:
        raise ValidationError(
            f"make_plan: cannot sample {m} frames from a {t}-frame video"
        )
    if k < 0:
        raise ValidationError(f"make_plan: stream count must be >= 0, got k={k}")
    if mode not in OFFSET_MODES:
        raise ValidationError(
            f"make_plan: mode must be one of {OFFSET_MODES}, got {mode!r}"
        )
    cap = max(1, t // m)
    if mode == "adjacent":
        offsets = tuple(min(j, cap) for j in range(1, k + 1))
    else:
        stride = t / m
        offsets = tuple(
            min(max(1, math.floor(j * stride / (k + 1))), cap) for j in range(1, k + 1)
        )
    return SamplingPlan(t=t, m=m, k=k, offsets=offsets)


def anchor_indices(plan: SamplingPlan) -> np.ndarray:
    """Dense indices of the M anchor frames: floor(i*T/M), exact in integers."""
    return (np.arange(plan.m, dtype=np.int64) * plan.t) // plan.m


def siamese_indices(plan: SamplingPlan, stream: int) -> np.ndarray:
    """Dense indices of siamese stream `stream` (1-based), clipped to T-1."""
    if not (1 <= stream <= plan.k):
        raise IndexError(
            f"siamese_indices: stream {stream} out of range for k={plan.k}"
        )
    return np.minimum(anchor_indices(plan) + plan.offsets[stream - 1], plan.t - 1)


@dataclass(frozen=True)
class BoundaryAnnotation:
    """Ground-truth segment boundaries in dense-frame units."""

    start: float
    end: float


@dataclass(frozen=True)
class BoundaryLabels:
    """Training targets for one annotated segment on the sampled timeline.

    hard_* are classifier targets in [0, M-1]; soft_* are the exact fractional
    positions in [0, M]; offset_* are the regression targets described in the
    module docstring.
    """

    hard_start: int
    hard_end: int
    soft_start: float
    soft_end: float
    offset_start: float
    offset_end: float


# The offset targets are capped a hair inside their open interval ends so a
# boundary sitting exactly on t = T stays representable.
_OFFSET_EPS = 1e-9


def map_boundary(annotation: BoundaryAnnotation, plan: SamplingPlan) -> BoundaryLabels:
    start, end = float(annotation.start), float(annotation.end)
    if not (0.0 <= start <= end <= plan.t):
        raise ValidationError(
            f"map_boundary: boundaries ({start}, {end}) outside [0, {plan.t}]"
        )
    soft_s = start * plan.m / plan.t
    soft_e = end * plan.m / plan.t
    hard_s = min(math.floor(soft_s), plan.m - 1)
    hard_e = min(math.floor(soft_e), plan.m - 1)
    if hard_s > hard_e:  # unreachable when start <= end, kept as a tripwire
        hard_e = hard_s
    off_s = min(max(hard_s + 1.0 - soft_s, _OFFSET_EPS), 1.0)
    off_e = min(max(soft_e - hard_e + 1.0, 1.0), 2.0 - _OFFSET_EPS)
    return BoundaryLabels(
        hard_start=hard_s,
        hard_end=hard_e,
        soft_start=soft_s,
        soft_end=soft_e,
        offset_start=off_s,
        offset_end=off_e,
    )


def unmap_index(index: float, plan: SamplingPlan) -> float:
    """Map a sampled-timeline position in [0, M] back to dense-frame units."""
    index = float(index)
    if not (0.0 <= index <= plan.m):
        raise ValidationError(
            f"unmap_index: position {index} outside [0, {plan.m}]"
        )
    return index * plan.t / plan.m


@dataclass(frozen=True)
class BiasReport:
    """How much segment quality is lost to boundary quantisation alone.

    Each annotation is mapped to hard indices and back; the report compares
    those reconstructed segments with the originals. No model is involved,
    so this is the floor any hard-decode predictor inherits.
    """

    count: int
    ious: np.ndarray
    start_drift: np.ndarray
    end_drift: np.ndarray
    mean_iou: float
    min_iou: float
    max_drift: float
    mean_drift: float
    max_drift_over_stride: float
    histogram: np.ndarray
    bucket_edges: np.ndarray


def _report_from_entries(entries: Sequence[tuple[int, float, float]], m: int) -> BiasReport:
    if not entries:
        raise ValidationError("bias report: no annotations")
    ious = np.empty(len(entries))
    ds = np.empty(len(entries))
    de = np.empty(len(entries))
    worst_ratio = 0.0
    for i, (t, start, end) in enumerate(entries):
        plan = make_plan(t, m, 0)
        labels = map_boundary(BoundaryAnnotation(start, end), plan)
        back_s = unmap_index(labels.hard_start, plan)
        back_e = unmap_index(labels.hard_end, plan)
        ious[i] = iou((back_s, back_e), (start, end))
        ds[i] = abs(back_s - start)
        de[i] = abs(back_e - end)
        worst_ratio = max(worst_ratio, max(ds[i], de[i]) / plan.stride)
    edges = np.linspace(0.0, 1.0, 11)
    hist, _ = np.histogram(ious, bins=edges)
    return BiasReport(
        count=len(entries),
        ious=ious,
        start_drift=ds,
        end_drift=de,
        mean_iou=float(ious.mean()),
        min_iou=float(ious.min()),
        max_drift=float(max(ds.max(), de.max())),
        mean_drift=float((ds + de).mean() / 2.0),
        max_drift_over_stride=worst_ratio,
        histogram=hist,
        bucket_edges=edges,
    )


def bias_report(
    annotations: Iterable[BoundaryAnnotation], plan: SamplingPlan
) -> BiasReport:
    """Quantisation loss for a batch of annotations under one sampling plan."""
    entries = [(plan.t, a.start, a.end) for a in annotations]
    return _report_from_entries(entries, plan.m)


def bias_report_varying(
    entries: Sequence[tuple[int, float, float]], m: int
) -> BiasReport:
    """Same report, but each entry carries its own dense length T.

    entries are (t, start, end) triples; every video is reduced to the same
    M sampled frames regardless of its length, which is exactly the regime
    where long videos lose the most boundary precision.
    """
    return _report_from_entries(entries, m)
