"""Meta-learning trainer.

Each outer iteration builds a meta-batch: every source domain serves as the
meta-test domain of exactly one sub-batch, with the remaining domains as its
meta-train set. Per sub-batch the trainer takes one inner optimizer step on
the meta-train loss (fresh moment state, the base parameters untouched),
evaluates the meta-test loss at the updated parameters, and accumulates both
gradients; the outer update averages the accumulated gradient over the
sub-batches. With ``second_order=False`` (the default) the meta-test gradient
is taken with respect to the updated parameters and applied to the base ones,
so no gradient-of-gradient tape is ever built.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import torch
from torch import nn

from .config import LossWeights, MetaConfig, ModelConfig
from .data import ScoredImage, TrainPair, resolve_image_path, resolve_seg_path
from .errors import ConfigurationError, NumericalFault, PreconditionError
from .images import load_labels, load_rgb
from .losses import CenterState, PairBatch, meta_test_loss, meta_train_loss
from .model import QualityNet, SegmentationMap, build_model, save_checkpoint

logger = logging.getLogger(__name__)

ABLATION_FLAGS = ("full", "no_meta", "no_cba", "no_aba")


def seed_everything(seed: int) -> None:
    random.seed(seed)
    torch.manual_seed(seed)
    try:
        import numpy as np

        np.random.seed(seed % 2**32)
    except ImportError:
        pass


@dataclass
class TrainerVariant:
    """Resolved ablation switch: which model to build and how to optimize."""

    flag: str
    pooled_training: bool


def ablation_mode(flag: str) -> TrainerVariant:
    if flag not in ABLATION_FLAGS:
        raise ConfigurationError(
            f"unknown ablation flag {flag!r}; expected one of {ABLATION_FLAGS}"
        )
    return TrainerVariant(flag=flag, pooled_training=(flag == "no_meta"))


@dataclass
class DomainDataset:
    """All training pairs of one source domain."""

    domain_id: int
    pairs: list[TrainPair]
    is_inpainting: bool = False

    def __post_init__(self) -> None:
        if not self.pairs:
            raise ConfigurationError(f"domain {self.domain_id} has no pairs")
        for p in self.pairs:
            if p.domain_id != self.domain_id:
                raise ConfigurationError(
                    f"pair from domain {p.domain_id} placed in domain "
                    f"{self.domain_id}"
                )


@dataclass
class SubBatch:
    meta_train: list[tuple[DomainDataset, list[TrainPair]]]
    meta_test: tuple[DomainDataset, list[TrainPair]]


class EpochSampler:
    """Draws fixed-size pair batches per domain without replacement.

    Pools are reshuffled at every epoch; an epoch supports
    ``iterations_per_epoch`` meta-batches before any pool runs dry.
    """

    def __init__(
        self,
        domains: Sequence[DomainDataset],
        batch_size: int,
        rng: random.Random,
        min_domains: int = 2,
    ):
        if len(domains) < min_domains:
            raise ConfigurationError(
                f"need at least {min_domains} domains, got {len(domains)}"
            )
        for d in domains:
            if len(d.pairs) < batch_size:
                raise ConfigurationError(
                    f"domain {d.domain_id} has {len(d.pairs)} pairs, fewer than "
                    f"batch_size={batch_size}"
                )
        self.domains = sorted(domains, key=lambda d: d.domain_id)
        self.batch_size = batch_size
        self.rng = rng
        self._order: dict[int, list[int]] = {}
        self._cursor: dict[int, int] = {}
        self.start_epoch()

    def iterations_per_epoch(self) -> int:
        return min(len(d.pairs) // self.batch_size for d in self.domains)

    def start_epoch(self) -> None:
        for d in self.domains:
            order = list(range(len(d.pairs)))
            self.rng.shuffle(order)
            self._order[d.domain_id] = order
            self._cursor[d.domain_id] = 0

    def _draw(self, domain: DomainDataset) -> list[TrainPair]:
        cursor = self._cursor[domain.domain_id]
        if cursor + self.batch_size > len(domain.pairs):
            raise PreconditionError(
                f"epoch pool of domain {domain.domain_id} exhausted"
            )
        idx = self._order[domain.domain_id][cursor : cursor + self.batch_size]
        self._cursor[domain.domain_id] = cursor + self.batch_size
        return [domain.pairs[i] for i in idx]

    def next_meta_batch(self) -> list[SubBatch]:
        draws = {d.domain_id: self._draw(d) for d in self.domains}
        sub_batches = []
        for test_domain in self.domains:
            train = [
                (d, draws[d.domain_id])
                for d in self.domains
                if d.domain_id != test_domain.domain_id
            ]
            sub_batches.append(
                SubBatch(
                    meta_train=train,
                    meta_test=(test_domain, draws[test_domain.domain_id]),
                )
            )
        return sub_batches


def sample_meta_batch(
    domains: Sequence[DomainDataset], batch_size: int, rng: random.Random
) -> list[SubBatch]:
    """One standalone meta-batch draw (fresh pools)."""
    sampler = EpochSampler(domains, batch_size, rng)
    return sampler.next_meta_batch()


@dataclass
class TensorBatch:
    """Decoded model inputs for one domain's pair batch."""

    domain_id: int
    images_i: torch.Tensor
    images_j: torch.Tensor
    seg: SegmentationMap
    labels: torch.Tensor
    target_i: Optional[torch.Tensor] = None
    target_j: Optional[torch.Tensor] = None


class BatchAssembler:
    """Loads and caches image/segmentation tensors for pair batches.

    Pseudo-MOS targets for the inpainting domain are min-max rescaled to
    [0, 1]; other domains' scores are used only ordinally and carry no
    regression target.
    """

    def __init__(
        self,
        manifest_paths: dict[int, Path],
        domain_images: dict[int, Sequence[ScoredImage]],
        model_config: ModelConfig,
        inpainting_domain: Optional[int] = None,
        cache: bool = True,
    ):
        self.manifest_paths = {k: Path(v) for k, v in manifest_paths.items()}
        self.model_config = model_config
        self.inpainting_domain = inpainting_domain
        self.size = (model_config.input_size[0], model_config.input_size[1])
        self._images = {
            (im.domain_id, im.stable_id): im
            for images in domain_images.values()
            for im in images
        }
        self._cache: Optional[dict] = {} if cache else None
        self._targets: dict[tuple[int, int], float] = {}
        if inpainting_domain is not None:
            images = domain_images.get(inpainting_domain, [])
            if images:
                lo = min(im.pseudo_mos for im in images)
                hi = max(im.pseudo_mos for im in images)
                span = hi - lo
                for im in images:
                    self._targets[(im.domain_id, im.stable_id)] = (
                        (im.pseudo_mos - lo) / span if span > 0 else 0.5
                    )

    def _load(self, image: ScoredImage) -> tuple[torch.Tensor, torch.Tensor]:
        key = (image.domain_id, image.stable_id)
        if self._cache is not None and key in self._cache:
            return self._cache[key]
        manifest = self.manifest_paths[image.domain_id]
        rgb = load_rgb(resolve_image_path(manifest, image), self.size)
        seg_path = resolve_seg_path(manifest, image)
        if seg_path is None:
            labels = torch.zeros(self.size, dtype=torch.long)
        else:
            labels = load_labels(seg_path, self.size)
        entry = (rgb, labels)
        if self._cache is not None:
            self._cache[key] = entry
        return entry

    def assemble(self, domain_id: int, pairs: Sequence[TrainPair]) -> TensorBatch:
        anchors = [self._load(p.anchor) for p in pairs]
        partners = [self._load(p.partner) for p in pairs]
        images_i = torch.stack([a[0] for a in anchors])
        images_j = torch.stack([b[0] for b in partners])
        labels_all = torch.stack([a[1] for a in anchors] + [b[1] for b in partners])
        seg = SegmentationMap(
            labels=labels_all, num_attributes=self.model_config.num_attributes
        )
        batch = TensorBatch(
            domain_id=domain_id,
            images_i=images_i,
            images_j=images_j,
            seg=seg,
            labels=torch.tensor([float(p.label) for p in pairs]),
        )
        if self.inpainting_domain is not None and domain_id == self.inpainting_domain:
            batch.target_i = torch.tensor(
                [self._targets[(domain_id, p.anchor.stable_id)] for p in pairs]
            )
            batch.target_j = torch.tensor(
                [self._targets[(domain_id, p.partner.stable_id)] for p in pairs]
            )
        return batch


class LossBundle(nn.Module):
    """Couples the model with the rank-feature centers so one parameter set
    covers both during functional substitution. ``forward`` returns the
    meta-train or meta-test composite for a list of tensor batches and stashes
    a float breakdown of the last call for logging."""

    def __init__(self, model: QualityNet, centers: CenterState, weights: LossWeights):
        super().__init__()
        self.model = model
        self.centers = centers
        self.weights = weights
        self.last_breakdown: dict[str, float] = {}

    def _pair_batch(self, tb: TensorBatch) -> PairBatch:
        n = tb.images_i.shape[0]
        # anchors and partners share one forward pass so batch statistics
        # cover the whole pair batch
        stacked = torch.cat([tb.images_i, tb.images_j])
        out = self.model(stacked, tb.seg)
        return PairBatch(
            y_i=out.score[:n],
            y_j=out.score[n:],
            q_i=out.features[:n],
            q_j=out.features[n:],
            labels=tb.labels,
            domain_id=tb.domain_id,
            target_i=tb.target_i,
            target_j=tb.target_j,
        )

    def forward(self, batches: Sequence[TensorBatch], phase: str) -> torch.Tensor:
        pair_batches = [self._pair_batch(tb) for tb in batches]
        from .losses import domain_losses

        rank = center = regression = 0.0
        for pb in pair_batches:
            r, c, s = domain_losses(pb, self.weights, self.centers)
            rank += float(r.detach())
            center += float(c.detach())
            regression += float(s.detach())
        self.last_breakdown = {
            "L_r": rank,
            "L_ct": center,
            "L_s": regression,
        }
        if phase == "train":
            return meta_train_loss(pair_batches, self.weights, self.centers)
        if phase == "test":
            if len(pair_batches) != 1:
                raise PreconditionError("meta-test expects exactly one batch")
            return meta_test_loss(pair_batches[0], self.weights, self.centers)
        raise ConfigurationError(f"unknown phase {phase!r}")


def apply_inner_step(
    params: Sequence[torch.Tensor],
    grads: Sequence[torch.Tensor],
    config: MetaConfig,
) -> list[torch.Tensor]:
    """One optimizer step with fresh state; returns new tensors, inputs kept.

    In "adam" mode the first/second moments start at zero, so a single
    bias-corrected step reduces to lr * g / (|g| + eps).
    """
    out = []
    for p, g in zip(params, grads):
        if config.inner_optimizer == "sgd":
            out.append(p - config.inner_lr * g)
        else:
            beta1, beta2, eps = 0.9, 0.999, 1e-8
            m_hat = ((1 - beta1) * g) / (1 - beta1)
            v_hat = ((1 - beta2) * g * g) / (1 - beta2)
            out.append(p - config.inner_lr * m_hat / (v_hat.sqrt() + eps))
    return out


@dataclass
class SubBatchResult:
    train_loss: float
    test_loss: float
    grads: list[torch.Tensor]
    breakdown: dict[str, float] = field(default_factory=dict)


class MetaUpdater:
    """First/second-order meta-updates over any module with a scalar loss.

    ``nested_grad_calls`` counts gradient computations taken with
    ``create_graph=True``; the first-order contract is that it stays zero.
    """

    def __init__(self, module: nn.Module, config: MetaConfig):
        self.module = module
        self.config = config
        self.nested_grad_calls = 0
        self._names = [n for n, _ in module.named_parameters()]

    def _params(self) -> list[torch.Tensor]:
        return [p for _, p in self.module.named_parameters()]

    def inner_update(self, train_args: tuple) -> tuple[dict, list, torch.Tensor]:
        """Inner step on the meta-train loss; base parameters unmodified.

        Returns (updated parameter mapping, meta-train grads, loss).
        """
        params = self._params()
        loss = self.module(*train_args)
        if not torch.isfinite(loss):
            raise NumericalFault(f"non-finite meta-train loss {float(loss)}")
        create_graph = self.config.second_order
        if create_graph:
            self.nested_grad_calls += 1
        grads = torch.autograd.grad(
            loss, params, create_graph=create_graph, allow_unused=True
        )
        grads = [
            torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)
        ]
        updated = apply_inner_step(params, grads, self.config)
        if not create_graph:
            updated = [u.detach().requires_grad_(True) for u in updated]
        return dict(zip(self._names, updated)), grads, loss

    def sub_batch_grads(self, train_args: tuple, test_args: tuple) -> SubBatchResult:
        params = self._params()
        updated, train_grads, train_loss = self.inner_update(train_args)
        test_loss = torch.func.functional_call(self.module, updated, test_args)
        if not torch.isfinite(test_loss):
            raise NumericalFault(f"non-finite meta-test loss {float(test_loss)}")
        wrt = params if self.config.second_order else list(updated.values())
        test_grads = torch.autograd.grad(test_loss, wrt, allow_unused=True)
        combined = []
        for p, g_tr, g_te in zip(params, train_grads, test_grads):
            g = g_tr.detach()
            if g_te is not None:
                g = g + g_te.detach()
            combined.append(g)
        return SubBatchResult(
            train_loss=float(train_loss.detach()),
            test_loss=float(test_loss.detach()),
            grads=combined,
        )

    def accumulate_and_step(
        self, results: Sequence[SubBatchResult], lr: float
    ) -> bool:
        """Outer update theta <- theta - lr * (g_sum / K) with decoupled L2.

        Returns False (and leaves parameters untouched) if the aggregate
        gradient is non-finite.
        """
        if not results:
            raise PreconditionError("no sub-batch results to aggregate")
        params = self._params()
        total = [torch.zeros_like(p) for p in params]
        for res in results:
            for acc, g in zip(total, res.grads):
                acc += g
        if any(not torch.isfinite(g).all() for g in total):
            logger.warning("skipping outer update: non-finite aggregate gradient")
            return False
        k = len(results)
        with torch.no_grad():
            for p, g in zip(params, total):
                update = g / k + self.config.weight_decay * p
                p.add_(update, alpha=-lr)
        return True


@dataclass
class EpochStats:
    epoch: int
    lr: float
    mean_train_loss: float
    mean_test_loss: float
    val_pair_accuracy: float
    val_srcc: float


@dataclass
class TrainResult:
    final_checkpoint: Path
    best_checkpoint: Path
    metrics_path: Path
    history: list[EpochStats]
    iterations: int


class MetaTrainer:
    """Drives Algorithm-style meta-batches (or pooled training for the
    no_meta ablation), with epoch-level validation and checkpointing."""

    def __init__(
        self,
        domains: Sequence[DomainDataset],
        assembler: BatchAssembler,
        weights: LossWeights,
        config: MetaConfig,
        run_dir: str | Path,
        model: Optional[QualityNet] = None,
        model_config: Optional[ModelConfig] = None,
        ablation: str = "full",
        resume_from: Optional[str | Path] = None,
    ):
        self.variant = ablation_mode(ablation)
        min_domains = 1 if self.variant.pooled_training else 2
        if len(domains) < min_domains:
            raise ConfigurationError(
                f"meta-training needs >= {min_domains} source domains, got "
                f"{len(domains)}"
            )
        self.config = config
        self.weights = weights
        self.assembler = assembler
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        (self.run_dir / "checkpoints").mkdir(exist_ok=True)

        seed_everything(config.seed)
        torch.set_num_threads(config.num_threads)
        if model is None:
            if model_config is None:
                raise ConfigurationError("need either a model or a model config")
            model = build_model(model_config, ablation)
        self.model = model
        self.centers = CenterState(model.config.feature_dim)
        self.bundle = LossBundle(self.model, self.centers, weights)
        self.updater = MetaUpdater(self.bundle, config)
        self._data_rng = random.Random(config.seed + 1)

        self.train_domains, self.val_domains = self._split_validation(domains)
        self.sampler = EpochSampler(
            self.train_domains,
            config.batch_size,
            self._data_rng,
            min_domains=min_domains,
        )
        self.metrics_path = self.run_dir / "metrics.jsonl"
        self.epoch = 0
        self.iteration = 0
        self._start_epoch = 0
        self._epoch_train_losses: list[float] = []
        self._epoch_test_losses: list[float] = []
        if resume_from is not None:
            self._restore(Path(resume_from))

    def _restore(self, path: Path) -> None:
        """Continue an interrupted run: parameters, counters, and RNG states."""
        from .model import load_checkpoint

        restored, extra = load_checkpoint(path)
        self.model.load_state_dict(restored.state_dict())
        self.centers.load_state_dict(extra["centers_state"])
        self.epoch = extra["epoch"]
        self._start_epoch = extra["epoch"] + 1
        self.iteration = extra["iteration"]
        torch.set_rng_state(extra["torch_rng_state"])
        self._data_rng.setstate(extra["data_rng_state"])

    def _split_validation(
        self, domains: Sequence[DomainDataset]
    ) -> tuple[list[DomainDataset], dict[int, list[TrainPair]]]:
        train, val = [], {}
        for d in sorted(domains, key=lambda d: d.domain_id):
            n_val = int(len(d.pairs) * self.config.val_fraction)
            order = list(range(len(d.pairs)))
            rng = random.Random(self.config.seed * 1000003 + d.domain_id)
            rng.shuffle(order)
            val_idx = set(order[:n_val])
            train_pairs = [p for i, p in enumerate(d.pairs) if i not in val_idx]
            val[d.domain_id] = [d.pairs[i] for i in sorted(val_idx)]
            train.append(
                DomainDataset(
                    domain_id=d.domain_id,
                    pairs=train_pairs,
                    is_inpainting=d.is_inpainting,
                )
            )
        return train, val

    def _log_metrics(self, record: dict) -> None:
        with self.metrics_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def _run_meta_iteration(self, lr: float) -> None:
        meta_batch = self.sampler.next_meta_batch()
        results = []
        for sub_index, sub in enumerate(meta_batch):
            train_batches = [
                self.assembler.assemble(d.domain_id, pairs)
                for d, pairs in sub.meta_train
            ]
            test_domain, test_pairs = sub.meta_test
            test_batch = self.assembler.assemble(test_domain.domain_id, test_pairs)
            try:
                result = self.updater.sub_batch_grads(
                    (train_batches, "train"), ([test_batch], "test")
                )
            except NumericalFault as exc:
                logger.warning(
                    "aborting iteration %d sub-batch %d: %s",
                    self.iteration,
                    sub_index,
                    exc,
                )
                return
            result.breakdown = dict(self.bundle.last_breakdown)
            results.append(result)
            self._epoch_train_losses.append(result.train_loss)
            self._epoch_test_losses.append(result.test_loss)
            self._log_metrics(
                {
                    "iteration": self.iteration,
                    "sub_batch": sub_index,
                    "L_r": result.breakdown.get("L_r"),
                    "L_ct": result.breakdown.get("L_ct"),
                    "L_s": result.breakdown.get("L_s"),
                    "L_tr": result.train_loss,
                    "L_te": result.test_loss,
                    "lr": lr,
                }
            )
        self.updater.accumulate_and_step(results, lr)

    def _run_pooled_iteration(self, optimizer: torch.optim.Optimizer, lr: float) -> None:
        draws = {
            d.domain_id: self.sampler._draw(d) for d in self.sampler.domains
        }
        batches = [
            self.assembler.assemble(domain_id, pairs)
            for domain_id, pairs in sorted(draws.items())
        ]
        loss = self.bundle(batches, "train")
        if not torch.isfinite(loss):
            logger.warning("skipping pooled iteration %d: non-finite loss", self.iteration)
            return
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        self._epoch_train_losses.append(float(loss.detach()))
        breakdown = dict(self.bundle.last_breakdown)
        self._log_metrics(
            {
                "iteration": self.iteration,
                "sub_batch": 0,
                "L_r": breakdown.get("L_r"),
                "L_ct": breakdown.get("L_ct"),
                "L_s": breakdown.get("L_s"),
                "L_tr": float(loss.detach()),
                "L_te": None,
                "lr": lr,
            }
        )

    @torch.no_grad()
    def validate(self) -> tuple[float, float]:
        """Held-out pair accuracy and mean per-domain SRCC of score vs target."""
        from .evaluation import srcc

        was_training = self.model.training
        self.model.eval()
        correct = total = 0
        srcc_values = []
        for domain_id, pairs in sorted(self.val_domains.items()):
            if not pairs:
                continue
            preds: dict[int, float] = {}
            targets: dict[int, float] = {}
            for start in range(0, len(pairs), max(1, self.config.batch_size)):
                chunk = pairs[start : start + max(1, self.config.batch_size)]
                tb = self.assembler.assemble(domain_id, chunk)
                out = self.bundle._pair_batch(tb)
                for p, yi, yj in zip(chunk, out.y_i.tolist(), out.y_j.tolist()):
                    preds[p.anchor.stable_id] = yi
                    preds[p.partner.stable_id] = yj
                    targets[p.anchor.stable_id] = p.anchor.pseudo_mos
                    targets[p.partner.stable_id] = p.partner.pseudo_mos
                    ordered = yi > yj if p.label == 1 else yi < yj
                    correct += int(ordered)
                    total += 1
            ids = sorted(preds)
            if len(ids) >= 3:
                value = srcc(
                    [preds[i] for i in ids], [targets[i] for i in ids]
                )
                if value == value:  # not NaN
                    srcc_values.append(value)
        if was_training:
            self.model.train()
        accuracy = correct / total if total else float("nan")
        mean_srcc = (
            sum(srcc_values) / len(srcc_values) if srcc_values else float("nan")
        )
        return accuracy, mean_srcc

    def _save(self, path: Path, val_accuracy: float, val_srcc: float) -> None:
        save_checkpoint(
            path,
            self.model,
            extra={
                "centers_state": self.centers.state_dict(),
                "epoch": self.epoch,
                "iteration": self.iteration,
                "ablation": self.variant.flag,
                "val_pair_accuracy": val_accuracy,
                "val_srcc": val_srcc,
                "torch_rng_state": torch.get_rng_state(),
                "data_rng_state": self._data_rng.getstate(),
            },
        )

    def train(self) -> TrainResult:
        self.model.train()
        history: list[EpochStats] = []
        best_srcc = float("-inf")
        best_path = self.run_dir / "checkpoints" / "best.pt"
        final_path = self.run_dir / "checkpoints" / "final.pt"
        optimizer = None
        if self.variant.pooled_training:
            optimizer = torch.optim.Adam(
                self.bundle.parameters(),
                lr=self.config.outer_lr,
                weight_decay=self.config.weight_decay,
            )

        stop = False
        for epoch in range(self._start_epoch, self.config.max_epochs):
            self.epoch = epoch
            lr = self.config.lr_at_epoch(epoch)
            if optimizer is not None:
                for group in optimizer.param_groups:
                    group["lr"] = lr
            self._epoch_train_losses.clear()
            self._epoch_test_losses.clear()
            self.sampler.start_epoch()
            for _ in range(self.sampler.iterations_per_epoch()):
                if (
                    self.config.max_iterations is not None
                    and self.iteration >= self.config.max_iterations
                ):
                    stop = True
                    break
                if optimizer is not None:
                    self._run_pooled_iteration(optimizer, lr)
                else:
                    self._run_meta_iteration(lr)
                self.iteration += 1

            val_accuracy, val_srcc = self.validate()
            losses = self._epoch_losses()
            history.append(
                EpochStats(
                    epoch=epoch,
                    lr=lr,
                    mean_train_loss=losses[0],
                    mean_test_loss=losses[1],
                    val_pair_accuracy=val_accuracy,
                    val_srcc=val_srcc,
                )
            )
            if (epoch + 1) % self.config.checkpoint_every == 0:
                self._save(
                    self.run_dir / "checkpoints" / f"epoch_{epoch:04d}.pt",
                    val_accuracy,
                    val_srcc,
                )
            if val_srcc == val_srcc and val_srcc > best_srcc:
                best_srcc = val_srcc
                self._save(best_path, val_accuracy, val_srcc)
            if stop:
                break

        val_accuracy, val_srcc = self.validate()
        self._save(final_path, val_accuracy, val_srcc)
        if not best_path.exists():
            self._save(best_path, val_accuracy, val_srcc)
        return TrainResult(
            final_checkpoint=final_path,
            best_checkpoint=best_path,
            metrics_path=self.metrics_path,
            history=history,
            iterations=self.iteration,
        )

    def _epoch_losses(self) -> tuple[float, float]:
        def mean(xs: list[float]) -> float:
            return sum(xs) / len(xs) if xs else float("nan")

        return mean(self._epoch_train_losses), mean(self._epoch_test_losses)
