"""Run configuration: one flat dataclass, readable from key=value text files.

Every field can be set from a config file line `name = value` and overridden
on the command line with --set name=value. Defaults follow the full-scale
recipe (M=200, K=4, D=512); the desk-scale presets shrink everything so a
run finishes in seconds on a laptop.
"""

from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass

from .errors import ValidationError
from .sampling import OFFSET_MODES


@dataclass
class TrainConfig:
    # model shapes
    m: int = 200
    k: int = 4
    d: int = 512
    d_raw: int = 4096
    d_emb: int = 300
    # blending and loss weights
    alpha: float = 0.5
    lam: float = 1.0
    # optimisation
    lr: float = 8e-4
    batch_size: int = 64
    max_steps: int = 1000
    eval_every: int = 50
    seed: int = 7
    # sampling behaviour and ablation switches
    offset_mode: str = "adjacent"
    use_siamese: bool = True
    ska: bool = True
    skr: bool = True
    soft_label: bool = True
    # optional early stopping, checked at every evaluation point; both
    # conditions must hold (recall is R@1 at IoU 0.7 under the active decode)
    stop_recall: float | None = None
    stop_span_loss: float | None = None
    # data: either a directory of feature files plus annotations, or synthetic
    features_dir: str | None = None
    annotations: str | None = None
    # synthetic data knobs (used when features_dir is unset)
    synth_count: int = 128
    synth_t_min: int = 200
    synth_t_max: int = 1200
    synth_snr: float = 3.0
    synth_query_min: int = 3
    synth_query_max: int = 8
    synth_seg_min: float = 0.15
    synth_seg_max: float = 0.45
    synth_off_grid: bool = False

    @property
    def reason_mode(self) -> str:
        return "residual" if self.skr else "concat"

    @property
    def decode_mode(self) -> str:
        # without offset supervision the regressed offsets are noise, so
        # evaluation falls back to the quantised decode
        return "refined" if self.soft_label else "hard"

    @property
    def effective_lam(self) -> float:
        return self.lam if self.soft_label else 0.0

    def validate(self) -> "TrainConfig":
        if self.m < 2:
            raise ValidationError(f"config: m must be >= 2, got {self.m}")
        if self.k < 0:
            raise ValidationError(f"config: k must be >= 0, got {self.k}")
        if self.use_siamese and self.k < 1:
            raise ValidationError("config: use_siamese requires k >= 1")
        if self.d < 2 or self.d % 2:
            raise ValidationError(f"config: d must be even and >= 2, got {self.d}")
        if self.d_raw < 1 or self.d_emb < 1:
            raise ValidationError(
                f"config: feature widths must be >= 1, got d_raw={self.d_raw},"
                f" d_emb={self.d_emb}"
            )
        if not (0.0 <= self.alpha <= 1.0):
            raise ValidationError(f"config: alpha must lie in [0, 1], got {self.alpha}")
        if self.lam < 0.0:
            raise ValidationError(f"config: lam must be >= 0, got {self.lam}")
        if self.lr <= 0.0:
            raise ValidationError(f"config: lr must be positive, got {self.lr}")
        for name in ("batch_size", "max_steps", "eval_every"):
            if getattr(self, name) < 1:
                raise ValidationError(
                    f"config: {name} must be >= 1, got {getattr(self, name)}"
                )
        if self.offset_mode not in OFFSET_MODES:
            raise ValidationError(
                f"config: offset_mode must be one of {OFFSET_MODES},"
                f" got {self.offset_mode!r}"
            )
        if (self.features_dir is None) != (self.annotations is None):
            raise ValidationError(
                "config: features_dir and annotations must be set together"
            )
        if self.features_dir is None:
            if self.synth_count < 1:
                raise ValidationError(
                    f"config: synth_count must be >= 1, got {self.synth_count}"
                )
            if not (self.m <= self.synth_t_min <= self.synth_t_max):
                raise ValidationError(
                    f"config: need m <= synth_t_min <= synth_t_max, got"
                    f" m={self.m}, range [{self.synth_t_min}, {self.synth_t_max}]"
                )
            if not (1 <= self.synth_query_min <= self.synth_query_max):
                raise ValidationError(
                    f"config: bad query length range"
                    f" [{self.synth_query_min}, {self.synth_query_max}]"
                )
            if not (0.0 < self.synth_seg_min <= self.synth_seg_max <= 1.0):
                raise ValidationError(
                    f"config: segment fractions must satisfy"
                    f" 0 < min <= max <= 1, got"
                    f" [{self.synth_seg_min}, {self.synth_seg_max}]"
                )
            if self.synth_snr < 0.0:
                raise ValidationError(
                    f"config: synth_snr must be >= 0, got {self.synth_snr}"
                )
        return self


def _field_types() -> dict[str, object]:
    return typing.get_type_hints(TrainConfig)


def _parse_value(name: str, text: str, typ: object):
    text = text.strip()
    origin = typing.get_origin(typ)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(typ) if a is not type(None)]
        if text.lower() in ("none", ""):
            return None
        typ = args[0]
    if typ is bool:
        low = text.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValidationError(f"config: {name} expects a boolean, got {text!r}")
    if typ is int:
        try:
            return int(text)
        except ValueError:
            raise ValidationError(f"config: {name} expects an integer, got {text!r}")
    if typ is float:
        try:
            return float(text)
        except ValueError:
            raise ValidationError(f"config: {name} expects a number, got {text!r}")
    return text


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def parse_config_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Parse `key = value` lines; # starts a comment, blank lines are skipped."""
    cfg = dataclasses.replace(base) if base else TrainConfig()
    hints = _field_types()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in hints:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _parse_value(key, value, hints[key]))
    return cfg


def load_config(path: str, base: TrainConfig | None = None) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base)


def apply_overrides(cfg: TrainConfig, pairs: list[str]) -> TrainConfig:
    """Apply --set key=value overrides on top of a parsed config."""
    hints = _field_types()
    for pair in pairs:
        if "=" not in pair:
            raise ValidationError(f"override {pair!r}: expected key=value")
        key, _, value = pair.partition("=")
        key = key.strip()
        if key not in hints:
            raise ValidationError(f"override: unknown key {key!r}")
        setattr(cfg, key, _parse_value(key, value, hints[key]))
    return cfg


def format_config(cfg: TrainConfig) -> str:
    """Render a config as a round-trippable key = value file."""
    lines = [
        f"{f.name} = {_format_value(getattr(cfg, f.name))}"
        for f in dataclasses.fields(cfg)
    ]
    return "\n".join(lines) + "\n"


def config_to_dict(cfg: TrainConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(data: dict) -> TrainConfig:
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"config: unknown keys {sorted(unknown)}")
    return TrainConfig(**data)


# Desk-scale presets. "smoke" overfits a small set quickly; "bias-stress"
# forces boundaries off the sampling grid on long videos so quantisation
# visibly hurts; "benchmark" is the stream-count comparison base.
PRESETS: dict[str, dict] = {
    "smoke": dict(
        m=16,
        k=2,
        d=32,
        d_raw=24,
        d_emb=16,
        lr=1e-3,
        batch_size=8,
        max_steps=500,
        eval_every=20,
        synth_count=32,
        synth_t_min=100,
        synth_t_max=300,
        synth_snr=4.0,
        synth_query_min=3,
        synth_query_max=6,
        synth_seg_min=0.2,
        synth_seg_max=0.5,
        stop_recall=95.0,
        stop_span_loss=0.1,
    ),
    "bias-stress": dict(
        m=16,
        k=2,
        d=32,
        d_raw=24,
        d_emb=16,
        lr=1e-3,
        batch_size=8,
        max_steps=400,
        eval_every=20,
        synth_count=32,
        synth_t_min=240,
        synth_t_max=600,
        synth_snr=4.0,
        synth_query_min=3,
        synth_query_max=6,
        synth_seg_min=0.12,
        synth_seg_max=0.3,
        synth_off_grid=True,
    ),
    "benchmark": dict(
        m=16,
        k=4,
        d=32,
        d_raw=24,
        d_emb=16,
        lr=1e-3,
        batch_size=8,
        max_steps=300,
        eval_every=25,
        synth_count=24,
        synth_t_min=240,
        synth_t_max=600,
        synth_snr=2.0,
        synth_query_min=3,
        synth_query_max=6,
        synth_seg_min=0.12,
        synth_seg_max=0.3,
        synth_off_grid=True,
    ),
}


def preset_config(name: str) -> TrainConfig:
    if name not in PRESETS:
        raise ValidationError(
            f"unknown preset {name!r}; available: {sorted(PRESETS)}"
        )
    return TrainConfig(**PRESETS[name])
