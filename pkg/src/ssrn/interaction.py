"""Video-query co-attention and fusion.

One projection matrix serves both attention directions: with the projected
query QW, the MxN similarity map is S = V (QW)^T. Row-normalising S attends
query tokens to each frame (A = rowsoft(S) QW); normalising over frames and
composing with the row attention routes video evidence back through the query
(B = rowsoft(S) colsoft(S)^T V). The fused stream packs V, A and their
interactions into a 4D-wide sequence and lets a bidirectional GRU mix it back
down to D.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import encoders


def init_interaction(rng: np.random.Generator, d: int) -> dict[str, np.ndarray]:
    p = {"interaction.ws": rng.standard_normal((d, d)) / np.sqrt(d)}
    p.update(encoders.init_bigru(rng, 4 * d, d, "interaction.fuse"))
    return p


def similarity(video, query, ws):
    """MxN similarity between frames and projected tokens: V (Q ws)^T."""
    return ad.matmul(video, ad.transpose(ad.matmul(query, ws)))


def coattend(video, query, sim, ws):
    """Both attention readouts: A (query->frame) and B (frame->frame via query).

    Rows of the row-normalised map each sum to one, so A is a convex mix of
    projected tokens per frame; B re-weights frames by how much they share
    query evidence.
    """
    projected = ad.matmul(query, ws)
    rows = ad.softmax_rows(sim)
    cols = ad.softmax_cols(sim)
    a = ad.matmul(rows, projected)
    b = ad.matmul(ad.matmul(rows, ad.transpose(cols)), video)
    return a, b


def fuse(video, a, b, params):
    """Mix [V; A; V*A; V*B] down to MxD with the fusion bigru."""
    packed = ad.concat_cols(
        ad.concat_cols(video, a),
        ad.concat_cols(ad.mul(video, a), ad.mul(video, b)),
    )
    return encoders.bigru(packed, params, "interaction.fuse")


@dataclass
class FusedStream:
    """A fused MxD feature map tagged with which sampling stream produced it."""

    features: object
    source: str


def interact(video, query, params, source: str) -> FusedStream:
    """similarity -> coattend -> fuse, for one video stream."""
    sim = similarity(video, query, params["interaction.ws"])
    a, b = coattend(video, query, sim, params["interaction.ws"])
    return FusedStream(features=fuse(video, a, b, params), source=source)
