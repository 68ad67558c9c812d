"""Span prediction heads: boundary distributions, offset regression, decoding.

Two stacked unidirectional LSTMs read the blended MxD features; the first
feeds a linear start scorer, the second (running on the first's states) feeds
the end scorer, so the end distribution is conditioned on start evidence.
A separate linear head regresses the two fractional offsets per position.

Decoding picks (s, e) maximising P_start(s) * P_end(e) under s <= e; ties go
to the smaller start, then the smaller end. refine() then undoes the sampling
quantisation with the regressed offsets:

    start' = s + 1 - O_start[s]
    end'   = e - 1 + O_end[e]

Plugging in the exact label offsets returns the exact fractional boundaries,
which is what makes the offsets sufficient statistics for the lost precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ValidationError

LSTM_GATES = ("i", "f", "o", "g")


def init_lstm_cell(
    rng: np.random.Generator, d_in: int, hidden: int, prefix: str
) -> dict[str, np.ndarray]:
    p: dict[str, np.ndarray] = {}
    for gate in LSTM_GATES:
        p[f"{prefix}.w{gate}"] = rng.standard_normal((d_in, hidden)) / np.sqrt(d_in)
        p[f"{prefix}.u{gate}"] = rng.standard_normal((hidden, hidden)) / np.sqrt(hidden)
        p[f"{prefix}.b{gate}"] = np.zeros((1, hidden))
    return p


def init_heads(rng: np.random.Generator, d: int) -> dict[str, np.ndarray]:
    """Both boundary LSTMs (hidden width D), their scorers, and the offset head."""
    p = init_lstm_cell(rng, d, d, "heads.start_lstm")
    p.update(init_lstm_cell(rng, d, d, "heads.end_lstm"))
    p.update(
        {
            "heads.start_w": rng.standard_normal((d, 1)) / np.sqrt(d),
            "heads.start_b": np.zeros((1, 1)),
            "heads.end_w": rng.standard_normal((d, 1)) / np.sqrt(d),
            "heads.end_b": np.zeros((1, 1)),
            "heads.offset_w": rng.standard_normal((d, 2)) / np.sqrt(d),
            "heads.offset_b": np.zeros((1, 2)),
        }
    )
    return p


def lstm_cell(x, h, c, params, prefix: str):
    def gate(name, squash):
        return squash(
            ad.add_rowvec(
                ad.add(
                    ad.matmul(x, params[f"{prefix}.w{name}"]),
                    ad.matmul(h, params[f"{prefix}.u{name}"]),
                ),
                params[f"{prefix}.b{name}"],
            )
        )

    i = gate("i", ad.sigmoid)
    f = gate("f", ad.sigmoid)
    o = gate("o", ad.sigmoid)
    g = gate("g", ad.tanh)
    c_next = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_next = ad.mul(o, ad.tanh(c_next))
    return h_next, c_next


def _lstm_run(seq, params, prefix: str):
    length = ad._val(seq).shape[0]
    hidden = ad._val(params[f"{prefix}.ui"]).shape[0]
    h = np.zeros((1, hidden))
    c = np.zeros((1, hidden))
    states = []
    for idx in range(length):
        h, c = lstm_cell(ad.row(seq, idx), h, c, params, prefix)
        states.append(h)
    return ad.stack_rows(states)


def _softmax_vec(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max()
    e = np.exp(shifted)
    return e / e.sum()


@dataclass
class SpanDistributions:
    """Boundary logits (graph values when training) plus their softmax probs."""

    start_logits: object
    end_logits: object
    start_probs: np.ndarray
    end_probs: np.ndarray

    @property
    def m(self) -> int:
        return self.start_probs.size


@dataclass
class OffsetPredictions:
    """Per-position offset regressions: start column and end column, Mx1 each."""

    start: object
    end: object
    start_values: np.ndarray
    end_values: np.ndarray


def span_scores(features, params) -> SpanDistributions:
    m = ad._val(features).shape[0]
    if m < 2:
        raise ValidationError(f"span_scores: need at least 2 positions, got {m}")
    h_start = _lstm_run(features, params, "heads.start_lstm")
    h_end = _lstm_run(h_start, params, "heads.end_lstm")
    s_logits = ad.add_rowvec(
        ad.matmul(h_start, params["heads.start_w"]), params["heads.start_b"]
    )
    e_logits = ad.add_rowvec(
        ad.matmul(h_end, params["heads.end_w"]), params["heads.end_b"]
    )
    return SpanDistributions(
        start_logits=s_logits,
        end_logits=e_logits,
        start_probs=_softmax_vec(ad._val(s_logits).ravel()),
        end_probs=_softmax_vec(ad._val(e_logits).ravel()),
    )


def offset_scores(features, params) -> OffsetPredictions:
    """Raw linear offset regressions; no squashing, the loss shapes the range."""
    out = ad.add_rowvec(
        ad.matmul(features, params["heads.offset_w"]), params["heads.offset_b"]
    )
    start = ad.slice_cols(out, 0, 1)
    end = ad.slice_cols(out, 1, 2)
    return OffsetPredictions(
        start=start,
        end=end,
        start_values=ad._val(start).ravel().copy(),
        end_values=ad._val(end).ravel().copy(),
    )


@dataclass
class SegmentPrediction:
    """One decoded segment. Hard indices always; refined and dense-time
    positions are filled in by refine_prediction / to_dense_time."""

    hard_start: int
    hard_end: int
    score: float
    refined_start: float | None = None
    refined_end: float | None = None
    time_start: float | None = None
    time_end: float | None = None
    degenerate: bool = False


def decode_top_n(dists: SpanDistributions, n: int) -> list[SegmentPrediction]:
    """Top n spans by joint boundary probability, subject to start <= end.

    Ranked by descending P_start(s) * P_end(e); exact ties break toward the
    smaller start, then the smaller end, so the ordering is total and
    reproducible.
    """
    if n < 1:
        raise ValidationError(f"decode_top_n: n must be >= 1, got {n}")
    m = dists.m
    joint = np.outer(dists.start_probs, dists.end_probs)
    s_idx, e_idx = np.triu_indices(m)
    scores = joint[s_idx, e_idx]
    # lexsort's last key is primary: descending score, then start, then end
    order = np.lexsort((e_idx, s_idx, -scores))[:n]
    return [
        SegmentPrediction(
            hard_start=int(s_idx[i]), hard_end=int(e_idx[i]), score=float(scores[i])
        )
        for i in order
    ]


def refine(
    hard_start: int,
    hard_end: int,
    offsets: OffsetPredictions,
) -> tuple[float, float, bool]:
    """Recover fractional boundaries from a hard span and regressed offsets.

    Results are clamped into [0, M]; if the pair crosses after refinement,
    both collapse to their midpoint and the degenerate flag is set.
    """
    m = offsets.start_values.size
    if not (0 <= hard_start <= hard_end <= m - 1):
        raise ValidationError(
            f"refine: span ({hard_start}, {hard_end}) invalid for m={m}"
        )
    start = hard_start + 1.0 - float(offsets.start_values[hard_start])
    end = hard_end - 1.0 + float(offsets.end_values[hard_end])
    start = min(max(start, 0.0), float(m))
    end = min(max(end, 0.0), float(m))
    if start > end:
        mid = 0.5 * (start + end)
        return mid, mid, True
    return start, end, False


def refine_prediction(
    pred: SegmentPrediction, offsets: OffsetPredictions
) -> SegmentPrediction:
    pred.refined_start, pred.refined_end, pred.degenerate = refine(
        pred.hard_start, pred.hard_end, offsets
    )
    return pred


@dataclass
class LossBundle:
    """Span loss, offset loss, and their weighted total, with graph handles."""

    total: object
    span: object
    offset: object
    total_value: float
    span_value: float
    offset_value: float


def compute_losses(
    dists: SpanDistributions,
    offsets: OffsetPredictions,
    labels,
    lam: float,
) -> LossBundle:
    """Cross-entropy on both boundary distributions plus smooth-L1 on the two
    offset entries at the labelled positions, combined as span + lam * offset."""
    lam = float(lam)
    if lam < 0.0:
        raise ValidationError(f"compute_losses: lam must be >= 0, got {lam}")
    m = dists.m
    if not (0 <= labels.hard_start <= labels.hard_end <= m - 1):
        raise ValidationError(
            f"compute_losses: labels ({labels.hard_start}, {labels.hard_end})"
            f" invalid for m={m}"
        )
    ce_s = ad.cross_entropy(dists.start_logits, labels.hard_start)
    ce_e = ad.cross_entropy(dists.end_logits, labels.hard_end)
    sl_s = ad.smooth_l1(
        ad.element(offsets.start, labels.hard_start, 0),
        np.array([[labels.offset_start]]),
    )
    sl_e = ad.smooth_l1(
        ad.element(offsets.end, labels.hard_end, 0),
        np.array([[labels.offset_end]]),
    )
    if isinstance(ce_s, ad.Node):
        span = ad.add(ce_s, ce_e)
        off = ad.add(sl_s, sl_e)
        total = ad.add(span, ad.scale(off, lam))
        return LossBundle(
            total=total,
            span=span,
            offset=off,
            total_value=float(total.value[0, 0]),
            span_value=float(span.value[0, 0]),
            offset_value=float(off.value[0, 0]),
        )
    # forward-only path: the loss terms come back as plain floats
    span = ce_s + ce_e
    off = sl_s + sl_e
    total = span + lam * off
    return LossBundle(
        total=total,
        span=span,
        offset=off,
        total_value=total,
        span_value=span,
        offset_value=off,
    )
