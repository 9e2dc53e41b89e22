"""Run configuration: JSON file + command-line overrides, hashed for provenance."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .adapt import AdaptConfig
from .align import BASELINES
from .errors import ConfigError
from .losses import LossWeights


@dataclass
class RunConfig:
    # data paths
    source_features: str | None = None
    source_meta: str | None = None
    source_text: str | None = None
    target_features: str | None = None
    target_meta: str | None = None
    truth_meta: str | None = None          # evaluation-only target captions
    truth_text: str | None = None
    val_target_features: str | None = None  # optional: best-epoch checkpointing
    val_target_meta: str | None = None
    val_truth_meta: str | None = None
    val_truth_text: str | None = None
    out_dir: str = "runs/out"

    # model architecture
    video_hidden: tuple = (228,)
    text_hidden: tuple = (1664,)
    embed_dim: int = 256
    learned_action_head: bool = False

    # optimization
    learning_rate: float = 0.01
    momentum: float = 0.9
    gamma: float = 0.1
    lambda_src_to_tgt: float = 0.1
    lambda_tgt_to_src: float = 0.1
    batch: int = 256
    epochs_pretrain: int = 30
    epochs_adapt: int = 30
    steps_per_epoch: int = 0               # 0: ceil(num source items / batch)
    seed: int = 0
    hard_neg_fraction: float = 0.3
    view_weight_verb: float = 1.0
    view_weight_noun: float = 1.0
    view_weight_action: float = 1.0

    # adaptation variants
    sample_percent: float = 60.0
    labelling: str = "nearest_source"
    confidence: str = "prototype"
    sampling: str = "per_prototype"

    # feature alignment baseline applied before training
    baseline: str = "pds"

    def __post_init__(self):
        self.video_hidden = tuple(int(h) for h in self.video_hidden)
        self.text_hidden = tuple(int(h) for h in self.text_hidden)
        self.validate()

    def validate(self) -> None:
        if self.baseline not in BASELINES:
            raise ConfigError(f"baseline must be one of {BASELINES}, got {self.baseline!r}")
        if self.batch < 1 or self.epochs_pretrain < 0 or self.epochs_adapt < 0:
            raise ConfigError("batch must be >= 1 and epoch counts nonnegative")
        if not 0.0 < self.hard_neg_fraction <= 1.0:
            raise ConfigError("hard_neg_fraction must be in (0, 1]")
        if self.learning_rate <= 0 or not 0 <= self.momentum < 1:
            raise ConfigError("need learning_rate > 0 and momentum in [0, 1)")
        # delegate the remaining range checks
        self.adapt_config()
        self.loss_weights()

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            gamma=self.gamma,
            lambda_src_to_tgt=self.lambda_src_to_tgt,
            lambda_tgt_to_src=self.lambda_tgt_to_src,
            view_weights={"verb": self.view_weight_verb, "noun": self.view_weight_noun,
                          "action": self.view_weight_action},
        )

    def adapt_config(self) -> AdaptConfig:
        return AdaptConfig(sample_percent=self.sample_percent, labelling=self.labelling,
                           confidence=self.confidence, sampling=self.sampling)

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["video_hidden"] = list(self.video_hidden)
        data["text_hidden"] = list(self.text_hidden)
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)

    def with_overrides(self, overrides: dict) -> "RunConfig":
        """New config with key=value overrides; values parse as JSON, else strings."""
        data = self.to_dict()
        known = {f.name for f in dataclasses.fields(self)}
        for key, raw in overrides.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if isinstance(raw, str):
                try:
                    data[key] = json.loads(raw)
                except json.JSONDecodeError:
                    data[key] = raw
            else:
                data[key] = raw
        return RunConfig.from_dict(data)
