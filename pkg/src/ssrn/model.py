"""The full grounding network, composed end to end.

Pipeline per sample: encode query and every video stream (shared video
weights), co-attend and fuse each stream with the query, blend the siamese
streams into the anchor, then score span boundaries and per-position offsets.

forward() runs in graph mode when handed Node leaves (training) and in plain
numpy when handed the parameter arrays themselves (inference); the code path
is identical either way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import encoders, heads, interaction, siamese
from .config import TrainConfig
from .data import GroundingSample
from .errors import ValidationError
from .heads import LossBundle, OffsetPredictions, SegmentPrediction, SpanDistributions
from .sampling import unmap_index


def init_params(cfg: TrainConfig, seed: int | None = None) -> dict[str, np.ndarray]:
    """Seeded parameter dictionary covering exactly the active branches."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    params = encoders.init_encoder(rng, cfg.d_raw, cfg.d, "video_enc")
    params.update(encoders.init_encoder(rng, cfg.d_emb, cfg.d, "query_enc"))
    params.update(interaction.init_interaction(rng, cfg.d))
    if cfg.use_siamese:
        params.update(siamese.init_siamese(rng, cfg.d, cfg.reason_mode))
    params.update(heads.init_heads(rng, cfg.d))
    return params


@dataclass
class ForwardOutputs:
    dists: SpanDistributions
    offsets: OffsetPredictions
    weights: object | None  # MxK aggregation weights when the branch ran


class GroundingNetwork:
    """Parameter container plus the composed forward/loss/predict calls."""

    def __init__(self, cfg: TrainConfig, params: dict[str, np.ndarray] | None = None):
        self.cfg = cfg.validate()
        self.params = init_params(cfg) if params is None else params

    def leaves(self) -> dict[str, ad.Node]:
        return {k: ad.leaf(v, name=k) for k, v in self.params.items()}

    def forward(self, sample: GroundingSample, env) -> ForwardOutputs:
        cfg = self.cfg
        query = encoders.encode_query(sample.query, env)
        anchor = encoders.encode_sequence(sample.anchor, env, "video_enc")
        fused_anchor = interaction.interact(anchor, query, env, "anchor").features
        weights = None
        if cfg.use_siamese:
            if not sample.siamese:
                raise ValidationError(
                    f"{sample.sample_id}: siamese branch enabled but the sample"
                    " carries no siamese streams"
                )
            fused_streams = []
            for idx, raw_stream in enumerate(sample.siamese, start=1):
                enc = encoders.encode_sequence(raw_stream, env, "video_enc")
                fused_streams.append(
                    interaction.interact(enc, query, env, f"siamese-{idx}").features
                )
            if cfg.ska:
                weights = siamese.aggregate(fused_anchor, fused_streams)
            else:
                weights = siamese.uniform_weights(
                    ad._val(fused_anchor).shape[0], len(fused_streams)
                )
            if cfg.skr:
                blended = siamese.reason(
                    fused_anchor, fused_streams, weights, env, cfg.alpha
                )
            else:
                blended = siamese.reason_concat(
                    fused_anchor, fused_streams, weights, env
                )
        else:
            blended = fused_anchor
        return ForwardOutputs(
            dists=heads.span_scores(blended, env),
            offsets=heads.offset_scores(blended, env),
            weights=weights,
        )

    def loss(self, sample: GroundingSample, env) -> tuple[ForwardOutputs, LossBundle]:
        out = self.forward(sample, env)
        bundle = heads.compute_losses(
            out.dists, out.offsets, sample.labels, self.cfg.effective_lam
        )
        return out, bundle

    def predict(
        self, sample: GroundingSample, top_n: int = 5
    ) -> list[SegmentPrediction]:
        """Inference on the current parameter arrays: decode, refine, and map
        every prediction back to dense-frame time."""
        out = self.forward(sample, self.params)
        preds = heads.decode_top_n(out.dists, top_n)
        for p in preds:
            heads.refine_prediction(p, out.offsets)
            if self.cfg.decode_mode == "hard":
                p.time_start = unmap_index(p.hard_start, sample.plan)
                p.time_end = unmap_index(p.hard_end, sample.plan)
            else:
                p.time_start = unmap_index(p.refined_start, sample.plan)
                p.time_end = unmap_index(p.refined_end, sample.plan)
        return preds
