"""Quality assessment toolkit for GAN-generated face images."""

from .config import LossWeights, MetaConfig, ModelConfig, PairPlan, TrainConfig
from .data import ScoredImage, TrainPair, assign_quality_levels, build_pairs
from .losses import (
    CenterState,
    PairBatch,
    center_loss,
    focal_rank_loss,
    meta_test_loss,
    meta_train_loss,
    pair_probability,
    score_regression_loss,
)
from .model import (
    QualityNet,
    QualityOutput,
    SegmentationMap,
    build_model,
    load_checkpoint,
    save_checkpoint,
)

__version__ = "0.1.0"

__all__ = [
    "CenterState",
    "LossWeights",
    "MetaConfig",
    "ModelConfig",
    "PairBatch",
    "PairPlan",
    "QualityNet",
    "QualityOutput",
    "ScoredImage",
    "SegmentationMap",
    "TrainConfig",
    "TrainPair",
    "assign_quality_levels",
    "build_model",
    "build_pairs",
    "center_loss",
    "focal_rank_loss",
    "load_checkpoint",
    "meta_test_loss",
    "meta_train_loss",
    "pair_probability",
    "save_checkpoint",
    "score_regression_loss",
    "__version__",
]
