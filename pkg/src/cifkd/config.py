"""Flat run configuration: key=value files, typed coercion, CLI overrides.

A config file is UTF-8 text, one ``key = value`` pair per line, with ``#``
starting a comment. Every key must name a TrainConfig field; values are
coerced by the field's annotated type. Overrides (from ``--set key=value``
flags) are applied after the file, last one wins.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .augment import AugmentConfig
from .cif import CifConfig
from .distill import DistillConfig
from .losses import LossConfig
from .model import ModelConfig
from .optim import OptimConfig


class ConfigError(ValueError):
    """Unknown key, bad value, or unreadable config text."""


@dataclass
class TrainConfig:
    # data and artifacts
    data_dir: str = "data"
    out_dir: str = "runs/default"
    teacher_file: str = ""          # embedding store path; empty = synthetic
    teacher_dim: int = 32
    teacher_seed: int = 0
    # model
    vocab_size: int = 20
    d_model: int = 64
    n_heads: int = 4
    enc_blocks: int = 4
    dec_blocks: int = 2
    ffn_mult: int = 2
    feat_dim: int = 80
    front_channels: int = 4
    # integrate-and-fire
    threshold: float = 1.0
    tail_fraction: float = 0.5
    # losses
    w_ce: float = 1.0
    w_ctc: float = 0.5
    w_qua: float = 1.0
    label_smoothing: float = 0.1
    # distillation
    lambda_ad: float = 0.0
    lambda_ld: float = 0.0
    ad_loss_kind: str = "CONT"
    temperature: float = 0.02
    negatives: int = 700
    alpha_mse: float = 0.01
    alpha_cos: float = 10.0
    alpha_lrd: float = 0.01
    # augmentation
    augment_prob: float = 0.0
    freq_width: int = 27
    freq_masks: int = 2
    time_width: int = 50
    time_masks: int = 2
    # optimization
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    weight_decay: float = 0.01
    clip_norm: float = 5.0
    warmup_steps: int = 0
    epochs: int = 200
    batch_size: int = 8
    seed: int = 0
    # evaluation / decoding
    eval_every: int = 10            # epochs between dev evaluations
    beam_size: int = 10
    length_normalize: bool = False

    def model_config(self) -> ModelConfig:
        return ModelConfig(vocab_size=self.vocab_size, d_model=self.d_model,
                           n_heads=self.n_heads, enc_blocks=self.enc_blocks,
                           dec_blocks=self.dec_blocks, ffn_mult=self.ffn_mult,
                           feat_dim=self.feat_dim,
                           front_channels=self.front_channels)

    def cif_config(self) -> CifConfig:
        return CifConfig(threshold=self.threshold,
                         tail_fraction=self.tail_fraction)

    def loss_config(self) -> LossConfig:
        return LossConfig(w_ce=self.w_ce, w_ctc=self.w_ctc, w_qua=self.w_qua,
                          label_smoothing=self.label_smoothing)

    def distill_config(self) -> DistillConfig:
        return DistillConfig(temperature=self.temperature,
                             negatives=self.negatives,
                             lambda_ad=self.lambda_ad,
                             lambda_ld=self.lambda_ld,
                             alpha_mse=self.alpha_mse,
                             alpha_cos=self.alpha_cos,
                             alpha_lrd=self.alpha_lrd,
                             ad_loss_kind=self.ad_loss_kind)

    def augment_config(self) -> AugmentConfig:
        return AugmentConfig(freq_width=self.freq_width,
                             freq_masks=self.freq_masks,
                             time_width=self.time_width,
                             time_masks=self.time_masks,
                             probability=self.augment_prob)

    def optim_config(self) -> OptimConfig:
        return OptimConfig(lr=self.lr, beta1=self.beta1, beta2=self.beta2,
                           eps=self.eps, weight_decay=self.weight_decay,
                           clip_norm=self.clip_norm,
                           warmup_steps=self.warmup_steps, epochs=self.epochs,
                           batch_size=self.batch_size, seed=self.seed)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind in ("bool", bool):
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_pairs(lines, source: str = "<config>") -> dict:
    out = {}
    for line_no, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}:{line_no}: expected key=value, got {text!r}")
        key, raw = text.split("=", 1)
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{line_no}: unknown key {key!r}")
        out[key] = _coerce(key, raw)
    return out


def load_config(path=None, overrides=()) -> TrainConfig:
    """Build a TrainConfig from an optional file plus key=value overrides."""
    values = {}
    if path is not None:
        with open(path, encoding="utf-8") as f:
            values.update(parse_pairs(f, source=str(path)))
    values.update(parse_pairs(list(overrides), source="<override>"))
    try:
        return TrainConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
