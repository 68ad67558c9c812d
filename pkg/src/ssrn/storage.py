"""On-disk formats: feature matrices, annotation records, checkpoints.

Feature file (one video): 8-byte magic "SSRNFEAT", then three little-endian
u32 fields (format version, rows, cols), then rows*cols float32 values,
row-major, little-endian. Rows are dense frames, cols are feature channels.

Annotations: JSON lines. Each record carries id, the dense length as
num_frames (or duration_seconds plus fps, converted at load), start and end
in dense-frame units, and the query as a token list (a plain string is split
on whitespace).

Checkpoint: 8-byte magic "SSRNCKPT", u32 version, u32 header length, a JSON
header (config snapshot, parameter names and shapes, optimiser presence,
payload checksum), then the raw float64 payload. Reload is bit-exact, and a
flipped payload byte fails the checksum instead of loading garbage.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig, config_from_dict, config_to_dict
from .data import RawSample
from .errors import (
    FormatError,
    IntegrityError,
    ShapeError,
    ValidationError,
    VersionError,
)

FEATURE_MAGIC = b"SSRNFEAT"
FEATURE_VERSION = 1
CHECKPOINT_MAGIC = b"SSRNCKPT"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# feature matrices


def write_features(path: str, features: np.ndarray) -> None:
    arr = np.ascontiguousarray(features, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ShapeError(f"write_features: need a non-empty 2-D matrix, got {arr.shape}")
    rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<8sIII", FEATURE_MAGIC, FEATURE_VERSION, rows, cols))
        fh.write(arr.astype("<f4").tobytes(order="C"))


def load_features(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(20)
        if len(head) < 20:
            raise FormatError(f"{path}: truncated header ({len(head)} of 20 bytes)")
        magic, version, rows, cols = struct.unpack("<8sIII", head)
        if magic != FEATURE_MAGIC:
            raise FormatError(
                f"{path}: bad magic {magic!r}, expected {FEATURE_MAGIC!r}"
            )
        if version != FEATURE_VERSION:
            raise VersionError(
                f"{path}: feature format version {version}, this build reads"
                f" version {FEATURE_VERSION}"
            )
        if rows < 1 or cols < 1:
            raise FormatError(f"{path}: empty matrix {rows}x{cols}")
        expected = rows * cols * 4
        payload = fh.read(expected + 1)
    if len(payload) < expected:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, header promises {expected}"
        )
    if len(payload) > expected:
        raise FormatError(f"{path}: trailing bytes after {rows}x{cols} payload")
    flat = np.frombuffer(payload, dtype="<f4")
    return flat.astype(np.float64).reshape(rows, cols)


# ---------------------------------------------------------------------------
# annotations


@dataclass
class AnnotationRecord:
    record_id: str
    num_frames: int
    start: float
    end: float
    tokens: list[str]

    def validate(self) -> "AnnotationRecord":
        if not self.record_id:
            raise ValidationError("annotation: empty id")
        if self.num_frames < 1:
            raise ValidationError(
                f"annotation {self.record_id}: num_frames must be >= 1,"
                f" got {self.num_frames}"
            )
        if not (0.0 <= self.start <= self.end <= self.num_frames):
            raise ValidationError(
                f"annotation {self.record_id}: boundaries ({self.start}, {self.end})"
                f" outside [0, {self.num_frames}]"
            )
        if not self.tokens:
            raise ValidationError(f"annotation {self.record_id}: empty query")
        return self


def _record_from_json(obj: dict, where: str) -> AnnotationRecord:
    try:
        rid = str(obj["id"])
        if "num_frames" in obj:
            num_frames = int(obj["num_frames"])
        else:
            num_frames = int(round(float(obj["duration_seconds"]) * float(obj["fps"])))
        query = obj["query"]
        tokens = query.split() if isinstance(query, str) else [str(t) for t in query]
        rec = AnnotationRecord(
            record_id=rid,
            num_frames=num_frames,
            start=float(obj["start"]),
            end=float(obj["end"]),
            tokens=tokens,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{where}: bad annotation record: {exc}") from exc
    return rec.validate()


def load_annotations(path: str) -> list[AnnotationRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path} line {lineno}: invalid JSON: {exc}") from exc
            records.append(_record_from_json(obj, f"{path} line {lineno}"))
    if not records:
        raise FormatError(f"{path}: no annotation records")
    return records


def save_annotations(path: str, records: list[AnnotationRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "id": rec.record_id,
                        "num_frames": rec.num_frames,
                        "start": rec.start,
                        "end": rec.end,
                        "query": rec.tokens,
                    }
                )
                + "\n"
            )


def feature_path(features_dir: str, record_id: str) -> str:
    return os.path.join(features_dir, f"{record_id}.feat")


def load_dataset(features_dir: str, annotations_path: str) -> list[RawSample]:
    """Pair every annotation with its feature file <id>.feat."""
    raws = []
    for rec in load_annotations(annotations_path):
        path = feature_path(features_dir, rec.record_id)
        if not os.path.exists(path):
            raise FormatError(f"{rec.record_id}: missing feature file {path}")
        features = load_features(path)
        if features.shape[0] != rec.num_frames:
            raise ShapeError(
                f"{rec.record_id}: feature file has {features.shape[0]} frames,"
                f" annotation says {rec.num_frames}"
            )
        raws.append(
            RawSample(
                sample_id=rec.record_id,
                features=features,
                tokens=rec.tokens,
                start=rec.start,
                end=rec.end,
            )
        )
    return raws


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    config: TrainConfig
    params: dict[str, np.ndarray]
    adam_step: int | None
    adam_m: dict[str, np.ndarray] | None
    adam_v: dict[str, np.ndarray] | None


def save_checkpoint(path: str, params: dict[str, np.ndarray], cfg: TrainConfig,
                    adam=None) -> None:
    names = sorted(params)
    chunks = [np.ascontiguousarray(params[n], dtype="<f8").tobytes() for n in names]
    has_adam = adam is not None
    if has_adam:
        for n in names:
            chunks.append(np.ascontiguousarray(adam.m[n], dtype="<f8").tobytes())
        for n in names:
            chunks.append(np.ascontiguousarray(adam.v[n], dtype="<f8").tobytes())
    payload = b"".join(chunks)
    header = {
        "config": config_to_dict(cfg),
        "params": [[n, list(params[n].shape)] for n in names],
        "has_adam": has_adam,
        "adam_step": adam.step if has_adam else None,
        "payload_crc32": zlib.crc32(payload),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(
            struct.pack("<8sII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(header_bytes))
        )
        fh.write(header_bytes)
        fh.write(payload)


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) < 16:
            raise FormatError(f"{path}: truncated header ({len(head)} of 16 bytes)")
        magic, version, header_len = struct.unpack("<8sII", head)
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(
                f"{path}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}"
            )
        if version != CHECKPOINT_VERSION:
            raise VersionError(
                f"{path}: checkpoint version {version}, this build reads"
                f" version {CHECKPOINT_VERSION}"
            )
        header_bytes = fh.read(header_len)
        if len(header_bytes) < header_len:
            raise FormatError(f"{path}: truncated checkpoint header")
        payload = fh.read()
    try:
        header = json.loads(header_bytes.decode("utf-8"))
        names_shapes = [(str(n), tuple(int(x) for x in shape)) for n, shape in header["params"]]
        stored_crc = int(header["payload_crc32"])
        has_adam = bool(header["has_adam"])
        cfg = config_from_dict(header["config"])
    except (KeyError, TypeError, ValueError, ValidationError) as exc:
        raise IntegrityError(f"{path}: unreadable checkpoint header: {exc}") from exc
    if zlib.crc32(payload) != stored_crc:
        raise IntegrityError(
            f"{path}: payload checksum mismatch, file is corrupt"
        )
    copies = 3 if has_adam else 1
    expected = sum(r * c for _, (r, c) in names_shapes) * 8 * copies
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, header promises {expected}"
        )

    offset = 0

    def take(shape: tuple[int, int]) -> np.ndarray:
        nonlocal offset
        n = shape[0] * shape[1] * 8
        arr = np.frombuffer(payload[offset : offset + n], dtype="<f8").reshape(shape)
        offset += n
        return arr.astype(np.float64)

    params = {n: take(s) for n, s in names_shapes}
    adam_m = adam_v = None
    adam_step = None
    if has_adam:
        adam_m = {n: take(s) for n, s in names_shapes}
        adam_v = {n: take(s) for n, s in names_shapes}
        adam_step = int(header["adam_step"])
    return Checkpoint(
        config=cfg, params=params, adam_step=adam_step, adam_m=adam_m, adam_v=adam_v
    )
