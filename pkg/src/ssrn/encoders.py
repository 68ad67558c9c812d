"""Sequence encoders: token vectors, positional encoding, GRU stacks.

Video frames and query tokens both go through the same recipe: project the
raw features to the model width, add a fixed sinusoidal positional code, then
run a bidirectional GRU whose two halves each carry half the width. Video
streams (anchor and all siamese shifts) share one parameter set; the query
has its own.

Parameters live in a flat {name: array} dict with dotted prefixes, e.g.
"video_enc.gru.fw.wz". Ops accept Nodes or arrays, so the same forward code
serves training (graph mode) and inference (plain numpy).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ValidationError


def token_vector(token: str, dim: int) -> np.ndarray:
    """Deterministic unit-norm vector for a token, the same in every process.

    Seeded from sha256 of the token text; python's builtin hash() is salted
    per process and would break run-to-run reproducibility.
    """
    if dim < 1:
        raise ValidationError(f"token_vector: dim must be >= 1, got {dim}")
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little")
    v = np.random.default_rng(seed).standard_normal(dim)
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def embed_tokens(tokens: list[str], dim: int) -> np.ndarray:
    """Stack token vectors into an NxD matrix."""
    if not tokens:
        raise ValidationError("embed_tokens: empty token list")
    return np.stack([token_vector(t, dim) for t in tokens], axis=0)


def positional_encoding(length: int, dim: int) -> np.ndarray:
    """Sinusoidal position code: PE[p, c] = sin(p / 10000^(c/D)) for even c
    and cos of the same angle at c+1."""
    if length < 1:
        raise ValidationError(f"positional_encoding: length must be >= 1, got {length}")
    if dim < 2 or dim % 2:
        raise ValidationError(
            f"positional_encoding: dim must be a positive even number, got {dim}"
        )
    pos = np.arange(length, dtype=np.float64)[:, None]
    even = np.arange(0, dim, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, even / dim)
    pe = np.empty((length, dim))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


# ---------------------------------------------------------------------------
# parameter initialisation

GRU_GATES = ("z", "r", "h")


def init_gru_cell(
    rng: np.random.Generator, d_in: int, hidden: int, prefix: str
) -> dict[str, np.ndarray]:
    p: dict[str, np.ndarray] = {}
    for gate in GRU_GATES:
        p[f"{prefix}.w{gate}"] = rng.standard_normal((d_in, hidden)) / np.sqrt(d_in)
        p[f"{prefix}.u{gate}"] = rng.standard_normal((hidden, hidden)) / np.sqrt(hidden)
        p[f"{prefix}.b{gate}"] = np.zeros((1, hidden))
    return p


def init_bigru(
    rng: np.random.Generator, d_in: int, d_out: int, prefix: str
) -> dict[str, np.ndarray]:
    if d_out < 2 or d_out % 2:
        raise ValidationError(
            f"init_bigru: output width must be even and >= 2, got {d_out}"
        )
    hidden = d_out // 2
    p = init_gru_cell(rng, d_in, hidden, f"{prefix}.fw")
    p.update(init_gru_cell(rng, d_in, hidden, f"{prefix}.bw"))
    return p


def init_encoder(
    rng: np.random.Generator, d_in: int, d: int, prefix: str
) -> dict[str, np.ndarray]:
    """Input projection plus a bidirectional GRU, d_in -> d."""
    p = {
        f"{prefix}.proj_w": rng.standard_normal((d_in, d)) / np.sqrt(d_in),
        f"{prefix}.proj_b": np.zeros((1, d)),
    }
    p.update(init_bigru(rng, d, d, f"{prefix}.gru"))
    return p


# ---------------------------------------------------------------------------
# recurrent cells


def gru_cell(x, h, params, prefix: str):
    """One GRU step on row vectors: returns the next hidden state.

    z = sig(xWz + hUz + bz); r = sig(xWr + hUr + br)
    cand = tanh(xWh + (r*h)Uh + bh); h' = (1-z)*cand + z*h
    All-zero parameters make z = 1/2 and cand = 0, so h' = h/2.
    """
    z = ad.sigmoid(
        ad.add_rowvec(
            ad.add(
                ad.matmul(x, params[f"{prefix}.wz"]),
                ad.matmul(h, params[f"{prefix}.uz"]),
            ),
            params[f"{prefix}.bz"],
        )
    )
    r = ad.sigmoid(
        ad.add_rowvec(
            ad.add(
                ad.matmul(x, params[f"{prefix}.wr"]),
                ad.matmul(h, params[f"{prefix}.ur"]),
            ),
            params[f"{prefix}.br"],
        )
    )
    cand = ad.tanh(
        ad.add_rowvec(
            ad.add(
                ad.matmul(x, params[f"{prefix}.wh"]),
                ad.matmul(ad.mul(r, h), params[f"{prefix}.uh"]),
            ),
            params[f"{prefix}.bh"],
        )
    )
    one_minus_z = ad.shift(ad.scale(z, -1.0), 1.0)
    return ad.add(ad.mul(one_minus_z, cand), ad.mul(z, h))


def _gru_run(seq, params, prefix: str, reverse: bool):
    length = ad._val(seq).shape[0]
    hidden = ad._val(params[f"{prefix}.uz"]).shape[0]
    h = np.zeros((1, hidden))
    states = []
    steps = range(length - 1, -1, -1) if reverse else range(length)
    for i in steps:
        h = gru_cell(ad.row(seq, i), h, params, prefix)
        states.append(h)
    if reverse:
        states.reverse()
    return ad.stack_rows(states)


def bigru(seq, params, prefix: str):
    """Bidirectional GRU over an LxD sequence; concatenates the two runs."""
    if ad._val(seq).shape[0] < 1:
        raise ValidationError("bigru: empty sequence")
    fw = _gru_run(seq, params, f"{prefix}.fw", reverse=False)
    bw = _gru_run(seq, params, f"{prefix}.bw", reverse=True)
    return ad.concat_cols(fw, bw)


def encode_sequence(raw, params, prefix: str):
    """Project raw features to width D, add positions, contextualise: LxD."""
    proj = ad.add_rowvec(
        ad.matmul(raw, params[f"{prefix}.proj_w"]), params[f"{prefix}.proj_b"]
    )
    shape = ad._val(proj).shape
    pe = positional_encoding(shape[0], shape[1])
    return bigru(ad.add(proj, pe), params, f"{prefix}.gru")


@dataclass
class EncodedVideo:
    """Anchor stream plus the K shifted siamese streams, all MxD."""

    anchor: object
    siamese: list


def encode_video(anchor_raw, siamese_raw: list, params) -> EncodedVideo:
    """Encode the anchor and every siamese stream with shared weights."""
    return EncodedVideo(
        anchor=encode_sequence(anchor_raw, params, "video_enc"),
        siamese=[encode_sequence(s, params, "video_enc") for s in siamese_raw],
    )


def encode_query(query_raw, params):
    """Encode the NxE token matrix into NxD with the query's own weights."""
    return encode_sequence(query_raw, params, "query_enc")
