"""Model and training configuration.

Defaults are the tuned full-model settings (u=50, k=100,
lr=0.015, dropout=0.3, patience 15). A config file is a flat JSON object
whose keys are the union of :class:`ModelConfig` and :class:`TrainConfig`
fields.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from dialogact.errors import ContractError, FormatError

ENCODER_VARIANTS = (
    "rnn-last",
    "birnn-last",
    "birnn-maxpool",
    "cnn",
    "birnn-attention",
    "birnn-attention-context",
    "birnn-selfattn",
    "birnn-selfattn-context",
    "tfidf-glove",
)

CONTEXT_VARIANTS = {"birnn-attention-context", "birnn-selfattn-context"}


def without_context(variant: str) -> str:
    return variant.removesuffix("-context")


@dataclass
class ModelConfig:
    encoder: str = "birnn-selfattn-context"
    word_dim: int = 300
    char_dim: int = 16
    char_filters: int = 50
    char_width: int = 3
    use_char_cnn: bool = True
    external_dim: int = 0
    u: int = 50
    k: int = 100
    d_a: int = 64
    r: int = 4
    dropout: float = 0.3
    attention_penalty: float = 0.0
    freeze_words: bool = False
    speaker_token: bool = False
    precision: str = "float64"
    seed: int = 0

    def __post_init__(self):
        if self.encoder not in ENCODER_VARIANTS:
            raise ContractError(f"unknown encoder variant {self.encoder!r}")
        for name in ("word_dim", "u", "k", "d_a", "r", "char_dim", "char_filters", "char_width"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError("dropout must lie in [0, 1)")
        if self.precision not in ("float64", "float32"):
            raise ContractError(f"precision must be float64 or float32, got {self.precision!r}")

    @property
    def uses_context(self) -> bool:
        return self.encoder in CONTEXT_VARIANTS

    @property
    def token_dim(self) -> int:
        return self.word_dim + (self.char_filters if self.use_char_cnn else 0) + self.external_dim


@dataclass
class TrainConfig:
    lr: float = 0.015
    patience: int = 15
    max_epochs: int = 100
    clip_norm: float | None = 5.0
    min_count: int = 1
    lowercase: bool = True
    unknown_label_policy: str = "unk"
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ContractError("learning rate must be positive")
        if self.patience < 1:
            raise ContractError("patience must be at least 1")
        if self.unknown_label_policy not in ("unk", "error", "drop"):
            raise ContractError(f"unknown label policy {self.unknown_label_policy!r}")


def load_config(path: str | Path | None, **overrides) -> tuple[ModelConfig, TrainConfig]:
    """Read a flat JSON config; keyword overrides win over file values."""
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise FormatError(f"config {path}: expected a flat object")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    mkeys = {f.name for f in fields(ModelConfig)}
    tkeys = {f.name for f in fields(TrainConfig)}
    unknown = set(raw) - mkeys - tkeys
    if unknown:
        raise FormatError(f"unknown config keys: {sorted(unknown)}")
    m = ModelConfig(**{k: v for k, v in raw.items() if k in mkeys})
    t = TrainConfig(**{k: v for k, v in raw.items() if k in tkeys})
    return m, t


def dump_config(model: ModelConfig, train: TrainConfig | None = None) -> dict:
    out = asdict(model)
    if train is not None:
        out.update({k: v for k, v in asdict(train).items() if k != "seed"})
    return out
