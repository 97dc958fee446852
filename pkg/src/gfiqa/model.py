"""Quality network for generated face images.

The backbone is staged: each stage opens with a stride-2 3x3 conv into the
stage width, runs one channel+spatial attention block, then two
attribute-conditioned blocks. The second attribute block of every stage is
globally average pooled; the four pooled vectors concatenate into the
multi-scale feature Q, and a single linear head maps Q to the scalar quality
score y.

Instances are single-writer while in training mode (forward passes mutate
batch-norm running statistics); a frozen eval-mode instance may be shared
across threads.
"""

from __future__ import annotations

import dataclasses
import logging
import pickle
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig
from .errors import ConfigurationError, DataError, NumericalFault, PreconditionError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class SegmentationMap:
    """Integer face-part labels, one map per batch item.

    ``labels`` has shape (N, H_s, W_s) with values in [0, num_attributes).
    """

    labels: torch.Tensor
    num_attributes: int

    def __post_init__(self) -> None:
        if self.labels.dim() == 2:
            self.labels = self.labels.unsqueeze(0)
        if self.labels.dim() != 3:
            raise DataError(
                f"segmentation labels must be (N, H, W), got shape "
                f"{tuple(self.labels.shape)}"
            )
        self.labels = self.labels.long()
        if self.labels.numel() and (
            int(self.labels.min()) < 0
            or int(self.labels.max()) >= self.num_attributes
        ):
            raise DataError(
                f"segmentation labels must lie in [0, {self.num_attributes}), "
                f"got range [{int(self.labels.min())}, {int(self.labels.max())}]"
            )

    def onehot(self, height: int, width: int, dtype=torch.float32) -> torch.Tensor:
        """Nearest-neighbor resize of the labels, then one-hot to (N, A, H, W)."""
        resized = F.interpolate(
            self.labels.unsqueeze(1).float(), size=(height, width), mode="nearest"
        ).squeeze(1).long()
        onehot = F.one_hot(resized, num_classes=self.num_attributes)
        return onehot.permute(0, 3, 1, 2).to(dtype)


def uniform_segmentation(batch: int, num_attributes: int) -> SegmentationMap:
    """Single-class fallback used when no parsing map is available."""
    return SegmentationMap(
        labels=torch.zeros(batch, 1, 1, dtype=torch.long),
        num_attributes=num_attributes,
    )


@dataclass
class AttentionWeights:
    """Sigmoid attention maps; every entry lies strictly in (0, 1)."""

    channel_map: torch.Tensor  # (N, C, 1, 1)
    spatial_map: torch.Tensor  # (N, 1, H, W)


@dataclass
class QualityOutput:
    score: torch.Tensor  # (N,)
    features: torch.Tensor  # (N, D)


def _check_finite(t: torch.Tensor, what: str) -> None:
    if not torch.isfinite(t).all():
        raise NumericalFault(f"non-finite values in {what}")


class ChannelAttention(nn.Module):
    """Global average pool, two 1x1 convs (C -> C/r -> C), sigmoid."""

    def __init__(self, channels: int, reduction: int):
        super().__init__()
        if channels % reduction != 0:
            raise ConfigurationError(
                f"channels={channels} not divisible by reduction={reduction}"
            )
        self.squeeze = nn.Conv2d(channels, channels // reduction, kernel_size=1)
        self.excite = nn.Conv2d(channels // reduction, channels, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        descriptor = x.mean(dim=(2, 3), keepdim=True)
        return torch.sigmoid(self.excite(self.squeeze(descriptor)))


class SpatialAttention(nn.Module):
    """Channelwise max+mean pooling, 5x5 conv to one channel, sigmoid."""

    def __init__(self, kernel_size: int = 5):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size=kernel_size, padding=kernel_size // 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        pooled = torch.cat(
            [x.max(dim=1, keepdim=True).values, x.mean(dim=1, keepdim=True)], dim=1
        )
        return torch.sigmoid(self.conv(pooled))


class ChannelSpatialAttention(nn.Module):
    """Attention block: V_c = W_c*F, V = W_s*V_c + V_c (shape preserving)."""

    def __init__(self, channels: int, reduction: int):
        super().__init__()
        self.channel = ChannelAttention(channels, reduction)
        self.spatial = SpatialAttention()

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, AttentionWeights]:
        channel_map = self.channel(x)
        attended = channel_map * x
        spatial_map = self.spatial(attended)
        out = spatial_map * attended + attended
        _check_finite(out, "attention block output")
        return out, AttentionWeights(channel_map=channel_map, spatial_map=spatial_map)


class AttributeTransform(nn.Module):
    """Predicts denormalization maps (gamma, beta) from a one-hot part map."""

    def __init__(self, num_attributes: int, channels: int):
        super().__init__()
        self.gamma = nn.Conv2d(num_attributes, channels, kernel_size=3, padding=1)
        self.beta = nn.Conv2d(num_attributes, channels, kernel_size=3, padding=1)

    def forward(self, onehot: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return self.gamma(onehot), self.beta(onehot)


class AttributeBlock(nn.Module):
    """Batch-normalize, denormalize with attribute-predicted affine maps, conv.

    With ``use_transform=False`` (the attribute-ablated variant) the
    segmentation input is ignored and the normalized feature goes straight to
    the trailing conv.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        num_attributes: int,
        bn_epsilon: float = 1e-5,
        use_transform: bool = True,
    ):
        super().__init__()
        self.norm = nn.BatchNorm2d(in_channels, eps=bn_epsilon, affine=False)
        self.transform = (
            AttributeTransform(num_attributes, in_channels) if use_transform else None
        )
        self.out_conv = nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1)

    def forward(self, v: torch.Tensor, seg: Optional[SegmentationMap]) -> torch.Tensor:
        if self.training and v.shape[0] == 0:
            raise PreconditionError("cannot batch-normalize an empty batch")
        normalized = self.norm(v)
        if self.transform is None:
            activated = normalized
        else:
            if seg is None:
                raise DataError("attribute block requires a segmentation map")
            onehot = seg.onehot(v.shape[2], v.shape[3], dtype=v.dtype)
            gamma, beta = self.transform(onehot)
            activated = gamma * normalized + beta
        out = self.out_conv(activated)
        _check_finite(out, "attribute block output")
        return out


class _Stage(nn.Module):
    def __init__(
        self,
        in_channels: int,
        width: int,
        config: ModelConfig,
        use_attention: bool,
        use_attribute_transform: bool,
    ):
        super().__init__()
        self.entry = nn.Conv2d(in_channels, width, kernel_size=3, stride=2, padding=1)
        self.attention = (
            ChannelSpatialAttention(width, config.reduction) if use_attention else None
        )
        self.block_a = AttributeBlock(
            width,
            width,
            config.num_attributes,
            config.bn_epsilon,
            use_transform=use_attribute_transform,
        )
        self.block_b = AttributeBlock(
            width,
            width,
            config.num_attributes,
            config.bn_epsilon,
            use_transform=use_attribute_transform,
        )

    def forward(
        self, x: torch.Tensor, seg: Optional[SegmentationMap]
    ) -> torch.Tensor:
        x = self.entry(x)
        if self.attention is not None:
            x, _ = self.attention(x)
        x = self.block_a(x, seg)
        return self.block_b(x, seg)


class QualityNet(nn.Module):
    """Full quality model: images (N, 3, H, W) in [0, 1] -> (score, features)."""

    def __init__(
        self,
        config: ModelConfig,
        use_attention: bool = True,
        use_attribute_transform: bool = True,
    ):
        super().__init__()
        self.config = config
        self.use_attention = use_attention
        self.use_attribute_transform = use_attribute_transform
        self.stem = nn.Conv2d(3, config.stage_channels[0], kernel_size=3, padding=1)
        stages = []
        in_channels = config.stage_channels[0]
        for width in config.stage_channels:
            stages.append(
                _Stage(in_channels, width, config, use_attention, use_attribute_transform)
            )
            in_channels = width
        self.stages = nn.ModuleList(stages)
        self.head = nn.Linear(config.feature_dim, 1)
        nn.init.zeros_(self.head.bias)
        self._warned_fallback = False

    def forward(
        self, images: torch.Tensor, seg: Optional[SegmentationMap] = None
    ) -> QualityOutput:
        height, width, _ = self.config.input_size
        if images.dim() != 4 or images.shape[1] != 3:
            raise DataError(
                f"expected images of shape (N, 3, H, W), got {tuple(images.shape)}"
            )
        if images.shape[2] != height or images.shape[3] != width:
            raise DataError(
                f"model expects fixed {height}x{width} input, got "
                f"{images.shape[2]}x{images.shape[3]}"
            )
        if images.shape[0] == 0:
            raise PreconditionError("empty batch")
        if seg is None and self.use_attribute_transform:
            if not self._warned_fallback:
                logger.warning(
                    "no segmentation map supplied; falling back to a uniform "
                    "single-class map (prediction quality degrades)"
                )
                self._warned_fallback = True
            seg = uniform_segmentation(images.shape[0], self.config.num_attributes)
        if seg is not None and seg.num_attributes != self.config.num_attributes:
            raise ConfigurationError(
                f"segmentation has {seg.num_attributes} classes, model expects "
                f"{self.config.num_attributes}"
            )

        x = self.stem(images)
        pooled = []
        for stage in self.stages:
            x = stage(x, seg)
            pooled.append(x.mean(dim=(2, 3)))
        features = torch.cat(pooled, dim=1)
        score = self.head(features).squeeze(1)
        _check_finite(score, "quality score")
        return QualityOutput(score=score, features=features)


def build_model(config: ModelConfig, ablation: str = "full") -> QualityNet:
    """Construct the model for an ablation flag in {full, no_meta, no_cba, no_aba}."""
    if ablation in ("full", "no_meta"):
        return QualityNet(config)
    if ablation == "no_cba":
        return QualityNet(config, use_attention=False)
    if ablation == "no_aba":
        return QualityNet(config, use_attribute_transform=False)
    raise ConfigurationError(f"unknown ablation flag {ablation!r}")


def _to_portable(obj):
    """Tensors become numpy arrays so the pickle stream is byte-reproducible
    (torch's own formats key storages by memory address or embed zip
    timestamps)."""
    if isinstance(obj, torch.Tensor):
        return ("__tensor__", obj.detach().cpu().numpy())
    if isinstance(obj, dict):
        return {k: _to_portable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        converted = [_to_portable(v) for v in obj]
        return converted if isinstance(obj, list) else tuple(converted)
    return obj


def _from_portable(obj):
    if isinstance(obj, tuple) and len(obj) == 2 and obj[0] == "__tensor__":
        return torch.from_numpy(obj[1].copy())
    if isinstance(obj, dict):
        return {k: _from_portable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_from_portable(v) for v in obj]
    if isinstance(obj, tuple):
        return tuple(_from_portable(v) for v in obj)
    return obj


def save_checkpoint(
    path: str | Path, model: QualityNet, extra: Optional[dict] = None
) -> None:
    """Write a self-describing archive: config, parameters, running stats,
    and a format-version integer. Identical state yields identical bytes."""
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_config": dataclasses.asdict(model.config),
        "ablation_flags": {
            "use_attention": model.use_attention,
            "use_attribute_transform": model.use_attribute_transform,
        },
        "model_state": _to_portable(dict(model.state_dict())),
        "extra": _to_portable(extra or {}),
    }
    Path(path).write_bytes(pickle.dumps(payload, protocol=4))


def load_checkpoint(path: str | Path) -> tuple[QualityNet, dict]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    try:
        payload = pickle.loads(path.read_bytes())
    except Exception as exc:
        raise DataError(f"{path} is not a readable checkpoint: {exc}") from exc
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise DataError(
            f"{path}: unsupported checkpoint format version {version!r}"
        )
    config = ModelConfig(**payload["model_config"])
    model = QualityNet(config, **payload["ablation_flags"])
    model.load_state_dict(_from_portable(payload["model_state"]))
    return model, _from_portable(payload.get("extra", {}))
