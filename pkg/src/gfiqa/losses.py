"""Training objectives: focal pairwise rank loss, center loss on ranking
features, masked score regression, and the meta-train/meta-test composites.

All operations act on predictions already produced by the model, carried in a
``PairBatch``. Everything is differentiable; ``CenterState`` holds the two
learned class centers and is optimized jointly with the model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import torch
from torch import nn

from .config import LossWeights
from .errors import ConfigurationError, DataError, PreconditionError

PROBABILITY_EPS = 1e-7


@dataclass
class PairBatch:
    """Model outputs for one batch of same-domain image pairs.

    ``labels`` is 1 where the first image's pseudo-MOS is the higher one.
    ``target_i``/``target_j`` carry rescaled pseudo-MOS regression targets and
    are only required for the inpainting domain.
    """

    y_i: torch.Tensor  # (N,)
    y_j: torch.Tensor  # (N,)
    q_i: torch.Tensor  # (N, D)
    q_j: torch.Tensor  # (N, D)
    labels: torch.Tensor  # (N,) in {0, 1}
    domain_id: int
    target_i: Optional[torch.Tensor] = None
    target_j: Optional[torch.Tensor] = None

    def __post_init__(self) -> None:
        n = self.y_i.shape[0]
        if not (
            self.y_j.shape[0] == n
            and self.q_i.shape[0] == n
            and self.q_j.shape[0] == n
            and self.labels.shape[0] == n
        ):
            raise ConfigurationError("pair batch fields disagree on length")
        bad = ((self.labels != 0) & (self.labels != 1)).any()
        if bool(bad):
            raise DataError("pair labels must be 0 or 1")

    def __len__(self) -> int:
        return self.y_i.shape[0]


class CenterState(nn.Module):
    """Learned class centers of the ranking features, zero initialized."""

    def __init__(self, dim: int):
        super().__init__()
        self.c0 = nn.Parameter(torch.zeros(dim))
        self.c1 = nn.Parameter(torch.zeros(dim))

    @property
    def dim(self) -> int:
        return self.c0.shape[0]


def pair_probability(
    y_i: torch.Tensor, y_j: torch.Tensor, labels: torch.Tensor
) -> torch.Tensor:
    """Probability that the pair is ordered as its label claims.

    For label 1 this is exp(y_i - y_j) / (1 + exp(y_i - y_j)); for label 0 the
    complement. Computed through the sigmoid so large score gaps cannot
    overflow.
    """
    diff = y_i - y_j
    sign = 2.0 * labels.to(diff.dtype) - 1.0
    return torch.sigmoid(sign * diff)


def focal_rank_loss(batch: PairBatch, gamma: float) -> torch.Tensor:
    """Mean of -(1-p)^gamma * log(p) over the batch."""
    if len(batch) == 0:
        raise PreconditionError("focal rank loss needs a non-empty batch")
    p = pair_probability(batch.y_i, batch.y_j, batch.labels)
    p = p.clamp(PROBABILITY_EPS, 1.0 - PROBABILITY_EPS)
    return (-((1.0 - p) ** gamma) * torch.log(p)).mean()


def center_loss(batch: PairBatch, centers: CenterState) -> torch.Tensor:
    """Squared distance of ranking features Q_i - Q_j to their class center."""
    if len(batch) == 0:
        raise PreconditionError("center loss needs a non-empty batch")
    if batch.q_i.shape[1] != centers.dim:
        raise ConfigurationError(
            f"feature dimension {batch.q_i.shape[1]} does not match centers "
            f"dimension {centers.dim}"
        )
    ranking = batch.q_i - batch.q_j
    chosen = torch.where(
        batch.labels.to(torch.bool).unsqueeze(1), centers.c1, centers.c0
    )
    return ((ranking - chosen) ** 2).sum(dim=1).mean()


def score_regression_loss(
    y: torch.Tensor,
    targets: Optional[torch.Tensor],
    domain_id: int,
    inpainting_domain: Optional[int],
) -> torch.Tensor:
    """Mean squared error against pseudo-MOS, active only on the inpainting
    domain; exactly zero elsewhere."""
    if inpainting_domain is None or domain_id != inpainting_domain:
        return y.new_zeros(())
    if targets is None:
        raise DataError(
            f"domain {domain_id} is the inpainting domain but the batch "
            "carries no pseudo-MOS targets"
        )
    if targets.shape != y.shape:
        raise ConfigurationError("targets and predictions disagree on shape")
    return ((targets - y) ** 2).mean()


def _batch_regression_loss(
    batch: PairBatch, inpainting_domain: Optional[int]
) -> torch.Tensor:
    if inpainting_domain is None or batch.domain_id != inpainting_domain:
        return batch.y_i.new_zeros(())
    if batch.target_i is None or batch.target_j is None:
        raise DataError(
            f"domain {batch.domain_id} is the inpainting domain but the batch "
            "carries no pseudo-MOS targets"
        )
    y = torch.cat([batch.y_i, batch.y_j])
    targets = torch.cat([batch.target_i, batch.target_j])
    return score_regression_loss(y, targets, batch.domain_id, inpainting_domain)


def domain_losses(
    batch: PairBatch, weights: LossWeights, centers: CenterState
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """The (rank, center, regression) components for one domain batch."""
    return (
        focal_rank_loss(batch, weights.focal_gamma),
        center_loss(batch, centers),
        _batch_regression_loss(batch, weights.inpainting_domain),
    )


def meta_train_loss(
    batches: Sequence[PairBatch], weights: LossWeights, centers: CenterState
) -> torch.Tensor:
    """Sum over the meta-train domains of the weighted three-part loss."""
    if not batches:
        raise PreconditionError("meta-train loss needs at least one domain batch")
    total = batches[0].y_i.new_zeros(())
    for batch in batches:
        rank, center, regression = domain_losses(batch, weights, centers)
        total = total + (
            weights.rank_weight * rank
            + weights.center_weight * center
            + weights.regression_weight * regression
        )
    return total


def meta_test_loss(
    batch: PairBatch, weights: LossWeights, centers: CenterState
) -> torch.Tensor:
    """Weighted three-part loss on the single meta-test batch."""
    rank, center, regression = domain_losses(batch, weights, centers)
    return (
        weights.test_rank_weight * rank
        + weights.test_center_weight * center
        + weights.regression_weight * regression
    )
