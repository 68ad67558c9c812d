"""Datasets: synthetic generation and assembly into model-ready samples.

A raw sample is a dense TxD_raw feature matrix plus a tokenised query and
dense-frame boundaries. Assembly applies a sampling plan: gather the anchor
and siamese frame subsets, embed the query tokens, and build the boundary
labels. Everything downstream consumes the assembled form.

Synthetic videos are gaussian noise with the query's signature added to the
frames inside the annotated segment. The signature is the mean token vector
pushed through a fixed random projection shared by the whole dataset, so the
mapping from query to visual evidence is learnable. With the off_grid flag
the generator rejection-samples boundaries whose fractional position on the
sampled timeline lands in [0.2, 0.8], which keeps hard labels from ever
being nearly exact and makes quantisation bias clearly visible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoders import embed_tokens
from .errors import ShapeError, ValidationError
from .sampling import (
    BoundaryAnnotation,
    BoundaryLabels,
    SamplingPlan,
    anchor_indices,
    make_plan,
    map_boundary,
    siamese_indices,
)


@dataclass
class RawSample:
    """One video before sampling: dense features, query, dense boundaries."""

    sample_id: str
    features: np.ndarray
    tokens: list[str]
    start: float
    end: float

    @property
    def t(self) -> int:
        return self.features.shape[0]


@dataclass
class GroundingSample:
    """One assembled training/evaluation sample."""

    sample_id: str
    plan: SamplingPlan
    anchor: np.ndarray
    siamese: list[np.ndarray]
    query: np.ndarray
    labels: BoundaryLabels
    truth: tuple[float, float]
    tokens: list[str]


def assemble_sample(
    raw: RawSample, m: int, k: int, offset_mode: str, d_emb: int
) -> GroundingSample:
    plan = make_plan(raw.t, m, k, offset_mode)
    anchor = raw.features[anchor_indices(plan)]
    streams = [raw.features[siamese_indices(plan, j)] for j in range(1, k + 1)]
    labels = map_boundary(BoundaryAnnotation(raw.start, raw.end), plan)
    return GroundingSample(
        sample_id=raw.sample_id,
        plan=plan,
        anchor=anchor,
        siamese=streams,
        query=embed_tokens(raw.tokens, d_emb),
        labels=labels,
        truth=(float(raw.start), float(raw.end)),
        tokens=list(raw.tokens),
    )


@dataclass(frozen=True)
class SyntheticSpec:
    """Everything the synthetic generator needs, fully determined by seed."""

    count: int
    t_min: int
    t_max: int
    m: int
    d_raw: int
    d_emb: int
    query_min: int
    query_max: int
    snr: float
    seg_min: float
    seg_max: float
    off_grid: bool
    seed: int

    def validate(self) -> "SyntheticSpec":
        if self.count < 1:
            raise ValidationError(f"synthetic: count must be >= 1, got {self.count}")
        if not (2 <= self.m <= self.t_min <= self.t_max):
            raise ValidationError(
                f"synthetic: need 2 <= m <= t_min <= t_max, got m={self.m},"
                f" t range [{self.t_min}, {self.t_max}]"
            )
        if not (1 <= self.query_min <= self.query_max):
            raise ValidationError(
                f"synthetic: bad query range [{self.query_min}, {self.query_max}]"
            )
        if not (0.0 < self.seg_min <= self.seg_max <= 1.0):
            raise ValidationError(
                f"synthetic: segment fractions must satisfy 0 < min <= max <= 1,"
                f" got [{self.seg_min}, {self.seg_max}]"
            )
        if self.snr < 0.0:
            raise ValidationError(f"synthetic: snr must be >= 0, got {self.snr}")
        if self.d_raw < 1 or self.d_emb < 1:
            raise ValidationError(
                f"synthetic: widths must be >= 1, got d_raw={self.d_raw},"
                f" d_emb={self.d_emb}"
            )
        return self


def _fractional_ok(pos: float, t: int, m: int) -> bool:
    frac = (pos * m / t) % 1.0
    return 0.2 <= frac <= 0.8


def _draw_segment(
    rng: np.random.Generator, t: int, spec: SyntheticSpec
) -> tuple[float, float]:
    for _ in range(1000):
        length = rng.uniform(spec.seg_min, spec.seg_max) * t
        start = rng.uniform(0.0, t - length)
        end = start + length
        if not spec.off_grid:
            return start, end
        if _fractional_ok(start, t, spec.m) and _fractional_ok(end, t, spec.m):
            return start, end
    raise ValidationError(
        "synthetic: could not draw an off-grid segment; widen the fractions"
    )


def synth_dataset(spec: SyntheticSpec) -> list[RawSample]:
    """Generate `count` raw samples, identical for identical specs."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    # one projection for the whole dataset makes query -> signature learnable
    projection = rng.standard_normal((spec.d_emb, spec.d_raw))
    samples = []
    for i in range(spec.count):
        t = int(rng.integers(spec.t_min, spec.t_max + 1))
        n_tokens = int(rng.integers(spec.query_min, spec.query_max + 1))
        tokens = [f"w{int(rng.integers(0, 4000)):04d}" for _ in range(n_tokens)]
        start, end = _draw_segment(rng, t, spec)
        signature = embed_tokens(tokens, spec.d_emb).mean(axis=0) @ projection
        norm = np.linalg.norm(signature)
        if norm > 0:
            signature = signature / norm
        features = rng.standard_normal((t, spec.d_raw))
        inside = np.arange(t)
        mask = (inside >= start) & (inside <= end)
        features[mask] += spec.snr * signature
        samples.append(
            RawSample(
                sample_id=f"synth-{i:04d}",
                features=features,
                tokens=tokens,
                start=float(start),
                end=float(end),
            )
        )
    return samples


def spec_from_config(cfg) -> SyntheticSpec:
    """Build the generator spec out of a TrainConfig's synth_* fields."""
    return SyntheticSpec(
        count=cfg.synth_count,
        t_min=cfg.synth_t_min,
        t_max=cfg.synth_t_max,
        m=cfg.m,
        d_raw=cfg.d_raw,
        d_emb=cfg.d_emb,
        query_min=cfg.synth_query_min,
        query_max=cfg.synth_query_max,
        snr=cfg.synth_snr,
        seg_min=cfg.synth_seg_min,
        seg_max=cfg.synth_seg_max,
        off_grid=cfg.synth_off_grid,
        seed=cfg.seed,
    )


def assemble_dataset(raws: list[RawSample], cfg) -> list[GroundingSample]:
    """Assemble raw samples under a config's plan; skips siamese streams when
    the siamese branch is disabled so anchor-only runs do no wasted work."""
    k = cfg.k if cfg.use_siamese else 0
    out = []
    for raw in raws:
        if raw.features.shape[1] != cfg.d_raw:
            raise ShapeError(
                f"{raw.sample_id}: features are {raw.features.shape[1]}-wide,"
                f" config expects d_raw={cfg.d_raw}"
            )
        out.append(assemble_sample(raw, cfg.m, k, cfg.offset_mode, cfg.d_emb))
    return out
