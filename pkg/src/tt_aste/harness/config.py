"""Run configuration: model, optimizer, data and schedule in one flat record."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, fields
from typing import Any

from ..data import DEFAULT_BUCKETS, SynthConfig
from ..errors import ConfigError
from ..model import ModelConfig
from ..numerics import OptimizerState


@dataclass
class RunConfig:
    # model
    d: int = 32
    d_bilinear: int | None = None
    d_prime: int = 48
    heads: int = 4
    ffn_width: int | None = None
    num_layers: int = 2
    b: int = 2
    w: int = 3
    attention: str = "stripe"
    loop_shift: bool = True
    wrap: str = "flattened"
    gate: str = "scalar"
    relation_encoder: bool = True
    task: str = "ASTE"
    pos_weight: float = 30.0
    max_candidates: int = 512
    # optimizer
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    # schedule
    epochs: int = 15
    batch_size: int = 8
    seed: int = 0
    # data: explicit files, one file split 80/10/10, or a synthetic corpus
    train_path: str | None = None
    dev_path: str | None = None
    test_path: str | None = None
    corpus_path: str | None = None
    synth_sentences: int = 2000
    synth_vocab: int = 200
    synth_min_len: int = 6
    synth_max_len: int = 20
    synth_min_triplets: int = 1
    synth_max_triplets: int = 2
    synth_buckets: list = dataclasses.field(default_factory=lambda: [list(b) for b in DEFAULT_BUCKETS])
    synth_multiword: float = 0.3
    synth_seed: int | None = None
    # outputs
    output: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.train_path and self.corpus_path:
            raise ConfigError("give either train_path or corpus_path, not both")
        self.model_config(vocab_size=2)

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(
            vocab_size=vocab_size,
            d=self.d,
            d_bilinear=self.d_bilinear,
            d_prime=self.d_prime,
            heads=self.heads,
            ffn_width=self.ffn_width,
            num_layers=self.num_layers,
            b=self.b,
            w=self.w,
            attention=self.attention,
            loop_shift=self.loop_shift,
            wrap=self.wrap,
            gate=self.gate,
            relation_encoder=self.relation_encoder,
            task=self.task,
            pos_weight=self.pos_weight,
            max_candidates=self.max_candidates,
        )

    def optimizer(self) -> OptimizerState:
        return OptimizerState(lr=self.lr, betas=(self.beta1, self.beta2), eps=self.eps, weight_decay=self.weight_decay)

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            num_sentences=self.synth_sentences,
            vocab_size=self.synth_vocab,
            length_range=(self.synth_min_len, self.synth_max_len),
            triplets_range=(self.synth_min_triplets, self.synth_max_triplets),
            distance_buckets=[tuple(b) for b in self.synth_buckets],
            multiword_aspect=self.synth_multiword,
            multiword_opinion=self.synth_multiword,
            seed=self.seed if self.synth_seed is None else self.synth_seed,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        unknown = set(data) - set(cls.field_names())
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        data.update(overrides or {})
        return cls.from_dict(data)


def long_distance_overrides(b: int, num_sentences: int = 1000) -> dict:
    """Synthetic settings where every gold pair is 7-9 tokens apart and sentences have >= 4b tokens.

    One triplet per sentence keeps the far pair the only signal to learn.
    """
    lo = max(4 * b, 10)
    return {
        "synth_sentences": num_sentences,
        "synth_buckets": [[7, 9, 1.0]],
        "synth_min_len": lo,
        "synth_max_len": lo + 4,
        "synth_min_triplets": 1,
        "synth_max_triplets": 1,
    }


def apply_env(cfg: RunConfig) -> RunConfig:
    """``TT_SEED`` overrides the configured seed."""
    seed = os.environ.get("TT_SEED")
    if seed is None or seed == "":
        return cfg
    try:
        return cfg.replace(seed=int(seed))
    except ValueError:
        raise ConfigError(f"TT_SEED must be an integer, got {seed!r}") from None
