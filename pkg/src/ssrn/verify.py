"""End-to-end gradient verification on a miniature network.

Builds one tiny synthetic sample, wires the complete pipeline (encoders,
co-attention, siamese blend, both heads, combined loss) into a scalar, and
compares every analytic parameter gradient against central finite
differences. Small shapes keep the probe count in the low thousands so the
whole check runs in well under a minute.
"""

from __future__ import annotations

from . import autodiff as ad
from .config import TrainConfig
from .data import assemble_dataset, spec_from_config, synth_dataset
from .model import GroundingNetwork


def tiny_config(seed: int = 7, k: int = 2) -> TrainConfig:
    return TrainConfig(
        m=6,
        k=k,
        d=8,
        d_raw=6,
        d_emb=5,
        alpha=0.5,
        lam=1.0,
        batch_size=1,
        max_steps=1,
        seed=seed,
        synth_count=1,
        synth_t_min=23,
        synth_t_max=31,
        synth_query_min=4,
        synth_query_max=4,
        synth_snr=2.0,
        synth_seg_min=0.25,
        synth_seg_max=0.6,
    )


def pipeline_grad_check(
    seed: int = 7,
    eps: float = 1e-5,
    tolerance: float = 1e-3,
    k: int = 2,
) -> ad.GradReport:
    cfg = tiny_config(seed=seed, k=k)
    sample = assemble_dataset(synth_dataset(spec_from_config(cfg)), cfg)[0]
    net = GroundingNetwork(cfg)

    def builder(env):
        _, bundle = net.loss(sample, env)
        return bundle.total

    return ad.grad_check(builder, net.params, eps=eps, tolerance=tolerance)
