"""Configuration records for the model, losses, training, and pair building.

Configs are plain dataclasses. ``load_train_config`` reads a human-readable
key/value file (TOML or JSON) with ``[model]``, ``[loss]``, ``[meta]`` and
``[data]`` sections; every run logs the fully resolved config as JSON so it
can be reproduced exactly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .errors import ConfigurationError


@dataclass
class ModelConfig:
    """Architecture hyperparameters of the quality network."""

    num_stages: int = 4
    stage_channels: tuple[int, ...] = (64, 128, 256, 512)
    reduction: int = 16
    num_attributes: int = 19
    bn_epsilon: float = 1e-5
    input_size: tuple[int, int, int] = (256, 256, 3)

    def __post_init__(self) -> None:
        self.stage_channels = tuple(int(c) for c in self.stage_channels)
        self.input_size = tuple(int(v) for v in self.input_size)
        if self.num_stages < 1:
            raise ConfigurationError("num_stages must be >= 1")
        if len(self.stage_channels) != self.num_stages:
            raise ConfigurationError(
                f"stage_channels has {len(self.stage_channels)} entries, "
                f"expected num_stages={self.num_stages}"
            )
        for c in self.stage_channels:
            if c < 1 or c % self.reduction != 0:
                raise ConfigurationError(
                    f"stage channel width {c} is not divisible by reduction "
                    f"ratio {self.reduction}"
                )
        if self.num_attributes < 1:
            raise ConfigurationError("num_attributes must be >= 1")
        if self.bn_epsilon <= 0:
            raise ConfigurationError("bn_epsilon must be positive")
        if len(self.input_size) != 3 or self.input_size[2] != 3:
            raise ConfigurationError("input_size must be (height, width, 3)")

    @property
    def feature_dim(self) -> int:
        """Width of the pooled multi-scale feature vector."""
        return sum(self.stage_channels)


@dataclass
class LossWeights:
    """Weighting of the training objectives.

    ``rank_weight`` .. ``test_center_weight`` are the five composite-loss
    weights (defaults 10, 0.01, 1, 10, 0.01); ``focal_gamma`` is the focusing
    exponent of the rank loss; ``inpainting_domain`` names the domain whose
    pseudo-MOS values are regressed directly (None disables the term).
    """

    rank_weight: float = 10.0
    center_weight: float = 0.01
    regression_weight: float = 1.0
    test_rank_weight: float = 10.0
    test_center_weight: float = 0.01
    focal_gamma: float = 2.0
    inpainting_domain: Optional[int] = None

    def __post_init__(self) -> None:
        for name in (
            "rank_weight",
            "center_weight",
            "regression_weight",
            "test_rank_weight",
            "test_center_weight",
            "focal_gamma",
        ):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative")


@dataclass
class MetaConfig:
    """Optimization schedule for the meta-learning trainer."""

    outer_lr: float = 1e-5
    inner_lr: float = 1e-5
    weight_decay: float = 5e-5
    batch_size: int = 10
    max_epochs: int = 100
    max_iterations: Optional[int] = None
    lr_decay_every: int = 10
    lr_decay_factor: float = 5.0
    inner_optimizer: str = "adam"
    second_order: bool = False
    val_fraction: float = 0.1
    checkpoint_every: int = 1
    num_threads: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.outer_lr < 0 or self.inner_lr < 0:
            raise ConfigurationError("learning rates must be non-negative")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ConfigurationError("max_epochs must be >= 0")
        if self.inner_optimizer not in ("adam", "sgd"):
            raise ConfigurationError(
                f"unknown inner_optimizer {self.inner_optimizer!r}"
            )
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigurationError("val_fraction must be in [0, 1)")
        if self.lr_decay_every < 1 or self.lr_decay_factor <= 0:
            raise ConfigurationError("invalid lr decay schedule")

    def lr_at_epoch(self, epoch: int) -> float:
        """Outer learning rate in effect for a 0-indexed epoch."""
        return self.outer_lr / self.lr_decay_factor ** (epoch // self.lr_decay_every)


@dataclass
class PairPlan:
    """Sampling plan for quality-discriminable pair construction."""

    n_levels: int = 3
    top_k: int = 50
    bottom_k: int = 50
    per_anchor: int = 500
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_levels < 2:
            raise ConfigurationError("n_levels must be >= 2")
        if self.top_k < 0 or self.bottom_k < 0 or self.top_k + self.bottom_k < 1:
            raise ConfigurationError("need at least one anchor")
        if self.per_anchor < 1:
            raise ConfigurationError("per_anchor must be >= 1")


@dataclass
class DataConfig:
    """File inputs of a training or evaluation run."""

    manifests: list[str] = field(default_factory=list)
    pairs_files: list[str] = field(default_factory=list)
    seg_suffix: str = "_seg"


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    meta: MetaConfig = field(default_factory=MetaConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _build_section(cls, values: dict, section: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigurationError(
            f"unknown keys in [{section}]: {', '.join(sorted(unknown))}"
        )
    return cls(**values)


def train_config_from_dict(raw: dict) -> TrainConfig:
    known = {"model", "loss", "meta", "data"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(
            f"unknown config sections: {', '.join(sorted(unknown))}"
        )
    return TrainConfig(
        model=_build_section(ModelConfig, raw.get("model", {}), "model"),
        loss=_build_section(LossWeights, raw.get("loss", {}), "loss"),
        meta=_build_section(MetaConfig, raw.get("meta", {}), "meta"),
        data=_build_section(DataConfig, raw.get("data", {}), "data"),
    )


def load_train_config(path: str | Path) -> TrainConfig:
    """Read a TOML or JSON training config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    text = path.read_bytes()
    if path.suffix == ".json":
        raw = json.loads(text)
    else:
        try:
            import tomllib  # Python >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            raw = tomllib.loads(text.decode("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config root of {path} must be a table")
    return train_config_from_dict(raw)


def apply_overrides(config: TrainConfig, overrides: Sequence[str]) -> TrainConfig:
    """Apply ``section.key=value`` command-line overrides to a config."""
    raw = config.to_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of form key=value")
        dotted, value = item.split("=", 1)
        parts = dotted.split(".")
        if len(parts) != 2:
            raise ConfigurationError(
                f"override key {dotted!r} must be section.key"
            )
        section, key = parts
        if section not in raw:
            raise ConfigurationError(f"unknown config section {section!r}")
        raw[section][key] = json.loads(value) if _looks_like_json(value) else value
    return train_config_from_dict(raw)


def _looks_like_json(value: str) -> bool:
    try:
        json.loads(value)
        return True
    except json.JSONDecodeError:
        return False
