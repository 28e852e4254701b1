"""Self-supervised pretraining loop.

Per batch: build the three views, run forward_views, compute the prediction,
instance, and cluster objectives with negatives filtered per anchor, step the
optimizer on the online parameters, then update the target branch by EMA.
Per epoch: blend the collected class distributions into pseudo-label records
and rebuild the memory bank from the collected strong-view features.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch
from torch.optim.lr_scheduler import CosineAnnealingLR

from .augment import AugConfig, strong_augment, weak_augment
from .bank import (
    MemoryBank,
    PseudoLabelRecord,
    blend_pseudo_probs,
    filter_negatives,
    rebuild_bank,
)
from .chips import ImageChip, LabeledChips, ViewTriple
from .errors import ConfigError, StateError
from .hog import HogConfig, handcrafted_transform
from .losses import (
    LossWeights,
    Temperature,
    cluster_consistency_loss,
    hand_prediction_loss,
    instance_contrastive_loss,
    overall_loss,
)
from .models import (
    DualStreamModel,
    EncoderSpec,
    forward_views,
    init_model,
    momentum_update,
    views_to_tensors,
)

CLUSTER_VIEW_PAIRS = (("weak", "strong"), ("weak", "handcrafted"), ("strong", "handcrafted"))


@dataclass(frozen=True)
class FnseConfig:
    """False-negative elimination settings: confidence threshold for
    reliable pseudo-labels and the weak/strong blend coefficient."""

    enabled: bool = True
    threshold: float = 0.95
    c: float = 0.7

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must lie in (0,1), got {self.threshold}")
        if not 0.0 <= self.c <= 1.0:
            raise ConfigError(f"blend coefficient must lie in [0,1], got {self.c}")


@dataclass(frozen=True)
class AblationConfig:
    """Task toggles. direct_contrast_mode swaps the handcrafted prediction
    objective for an InfoNCE term with (weak, handcrafted) as the positive
    pair, keeping the same weight."""

    hand_task: bool = True
    cluster_task: bool = True
    direct_contrast_mode: bool = False

    def __post_init__(self):
        if self.direct_contrast_mode and not self.hand_task:
            raise ConfigError("direct_contrast_mode requires the handcrafted task to be enabled")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 0.03
    weight_decay: float = 1e-4
    momentum: float = 0.9
    ema_momentum: float = 0.999
    loss_weights: LossWeights = field(default_factory=LossWeights)
    tau: Temperature = field(default_factory=Temperature)
    fnse: FnseConfig = field(default_factory=FnseConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    # in_flight reuses the batch forward passes for bank features and
    # pseudo-labels; end_of_epoch runs a frozen full-dataset pass instead
    pseudo_label_source: str = "in_flight"

    def __post_init__(self):
        if self.pseudo_label_source not in ("in_flight", "end_of_epoch"):
            raise ConfigError(
                f"pseudo_label_source must be 'in_flight' or 'end_of_epoch', got {self.pseudo_label_source!r}"
            )
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"optimizer momentum must lie in [0,1), got {self.momentum}")
        if not 0.0 <= self.ema_momentum <= 1.0:
            raise ConfigError(f"ema_momentum must lie in [0,1], got {self.ema_momentum}")


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    mean_loss_hand: float
    mean_loss_inst: float
    mean_loss_clust: float
    mean_loss_overall: float
    eliminated_fraction: float
    bank_size: int

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "mean_loss_hand": self.mean_loss_hand,
            "mean_loss_inst": self.mean_loss_inst,
            "mean_loss_clust": self.mean_loss_clust,
            "mean_loss_overall": self.mean_loss_overall,
            "eliminated_fraction": self.eliminated_fraction,
            "bank_size": self.bank_size,
        }


def effective_weights(weights: LossWeights, ablation: AblationConfig) -> LossWeights:
    """Zero the weights of disabled tasks and renormalize to sum 1."""
    alpha = weights.alpha if ablation.hand_task else 0.0
    gamma = weights.gamma if ablation.cluster_task else 0.0
    total = alpha + weights.beta + gamma
    if total <= 0.0:
        raise ConfigError("all loss weights are zero after applying ablation toggles")
    return LossWeights(alpha / total, weights.beta / total, gamma / total)


class PretrainData:
    """Dataset wrapper that precomputes the deterministic handcrafted view
    once per chip and synthesizes weak/strong views on demand."""

    def __init__(
        self,
        chips: Sequence[ImageChip] | LabeledChips,
        aug_cfg: AugConfig | None = None,
        hog_cfg: HogConfig | None = None,
    ):
        if isinstance(chips, LabeledChips):
            chips = chips.chips
        if len(chips) == 0:
            raise ConfigError("dataset must be nonempty")
        self.chips = list(chips)
        self.aug_cfg = aug_cfg if aug_cfg is not None else AugConfig()
        self.hog_cfg = hog_cfg if hog_cfg is not None else HogConfig()
        self.hand_views = [handcrafted_transform(chip, self.hog_cfg) for chip in self.chips]

    def __len__(self) -> int:
        return len(self.chips)

    def views(self, index: int, rng: np.random.Generator) -> ViewTriple:
        chip = self.chips[index]
        return ViewTriple(
            weak=weak_augment(chip, self.aug_cfg, rng),
            strong=strong_augment(chip, self.aug_cfg, rng),
            handcrafted=self.hand_views[index],
        )


def update_pseudo_labels(
    class_probs_w: np.ndarray, class_probs_s: np.ndarray, c: float
) -> list[PseudoLabelRecord]:
    """Blend weak/strong class distributions rowwise into label records."""
    probs_w = np.asarray(class_probs_w, dtype=np.float64)
    probs_s = np.asarray(class_probs_s, dtype=np.float64)
    if probs_w.shape != probs_s.shape or probs_w.ndim != 2:
        raise ValueError(
            f"class probability matrices must share an NxM shape, got {probs_w.shape} and {probs_s.shape}"
        )
    return [blend_pseudo_probs(pw, ps, c) for pw, ps in zip(probs_w, probs_s)]


def _batch_indices(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    """Consecutive chunks; a trailing singleton is padded by wrapping so
    batch statistics stay well defined."""
    batches = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-1] = np.concatenate([batches[-1], order[:1]])
    elif len(batches) == 1 and len(batches[0]) == 1:
        raise ConfigError("cannot form a batch of at least 2 chips")
    return batches


def train_epoch(
    model: DualStreamModel,
    data: PretrainData,
    cfg: TrainConfig,
    bank: MemoryBank | None = None,
    *,
    epoch: int = 1,
    rng: np.random.Generator | None = None,
    optimizer: torch.optim.Optimizer | None = None,
) -> tuple[EpochReport, torch.Tensor, list[PseudoLabelRecord]]:
    """One pass over the dataset. Mutates the model in place and returns the
    epoch report plus the strong-view features and blended pseudo-label
    records needed to rebuild the bank.
    """
    if epoch > 1 and cfg.fnse.enabled and bank is None:
        raise StateError(f"epoch {epoch} requires a memory bank when FNSE is enabled")
    if bank is not None and bank.features.shape[1] != model.spec.projection_dim:
        raise StateError(
            f"bank feature dimension {bank.features.shape[1]} does not match "
            f"projection_dim {model.spec.projection_dim}"
        )
    if rng is None:
        rng = np.random.default_rng(epoch)
    if optimizer is None:
        optimizer = make_optimizer(model, cfg)

    weights = effective_weights(cfg.loss_weights, cfg.ablation)
    model.train()
    n = len(data)
    feat_dim = model.spec.projection_dim
    collected_feats = torch.zeros(n, feat_dim)
    collected_w = np.zeros((n, model.n_classes), dtype=np.float64)
    collected_s = np.zeros((n, model.n_classes), dtype=np.float64)

    sums = {"hand": 0.0, "inst": 0.0, "clust": 0.0, "overall": 0.0}
    eliminated = 0
    anchor_bank_pairs = 0
    order = rng.permutation(n)

    for batch_idx in _batch_indices(order, cfg.batch_size):
        views = [data.views(int(i), rng) for i in batch_idx]
        outs = forward_views(model, views)

        if bank is None:
            banks = [torch.zeros(0, feat_dim) for _ in batch_idx]
        else:
            banks = []
            for i in batch_idx:
                if cfg.fnse.enabled:
                    anchor = bank.records[int(i)]
                    keep = filter_negatives(anchor, bank, cfg.fnse.threshold)
                else:
                    keep = np.arange(bank.size, dtype=np.int64)
                eliminated += bank.size - len(keep)
                anchor_bank_pairs += bank.size
                banks.append(bank.features[torch.from_numpy(keep)])

        if cfg.ablation.hand_task:
            if cfg.ablation.direct_contrast_mode:
                l_hand = instance_contrastive_loss(outs.z_w, outs.x_h, banks, cfg.tau)
            else:
                l_hand = hand_prediction_loss(outs.z_pred, outs.x_h)
        else:
            l_hand = torch.zeros(())
        l_inst = instance_contrastive_loss(outs.z_w, outs.z_s, banks, cfg.tau)
        if cfg.ablation.cluster_task:
            pair_losses = [
                cluster_consistency_loss(outs.cluster_dists[p], outs.cluster_dists[q], cfg.tau)
                for p, q in CLUSTER_VIEW_PAIRS
            ]
            l_clust = torch.stack(pair_losses).mean()
        else:
            l_clust = torch.zeros(())
        loss = overall_loss(l_hand, l_inst, l_clust, weights)

        optimizer.zero_grad(set_to_none=True)
        if loss.requires_grad:
            loss.backward()
            optimizer.step()
        momentum_update(model)

        sums["hand"] += float(l_hand.detach())
        sums["inst"] += float(l_inst.detach())
        sums["clust"] += float(l_clust.detach())
        sums["overall"] += float(loss.detach())
        idx = torch.from_numpy(batch_idx.astype(np.int64))
        collected_feats[idx] = outs.z_s.detach()
        collected_w[batch_idx] = outs.cluster_dists["weak"].detach().numpy().astype(np.float64)
        collected_s[batch_idx] = outs.cluster_dists["strong"].detach().numpy().astype(np.float64)

    if cfg.pseudo_label_source == "end_of_epoch":
        model.eval()
        with torch.no_grad():
            for start in range(0, n, cfg.batch_size):
                span = np.arange(start, min(start + cfg.batch_size, n))
                views = [data.views(int(i), rng) for i in span]
                outs = forward_views(model, views)
                collected_feats[torch.from_numpy(span)] = outs.z_s
                collected_w[span] = outs.cluster_dists["weak"].numpy().astype(np.float64)
                collected_s[span] = outs.cluster_dists["strong"].numpy().astype(np.float64)
        model.train()

    n_batches = len(_batch_indices(order, cfg.batch_size))
    report = EpochReport(
        epoch=epoch,
        mean_loss_hand=sums["hand"] / n_batches,
        mean_loss_inst=sums["inst"] / n_batches,
        mean_loss_clust=sums["clust"] / n_batches,
        mean_loss_overall=sums["overall"] / n_batches,
        eliminated_fraction=(eliminated / anchor_bank_pairs) if anchor_bank_pairs else 0.0,
        bank_size=bank.size if bank is not None else 0,
    )
    records = update_pseudo_labels(collected_w, collected_s, cfg.fnse.c)
    return report, collected_feats, records


def make_optimizer(model: DualStreamModel, cfg: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.SGD(
        [p for p in model.trainable_parameters()],
        lr=cfg.learning_rate,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
    )


def run_pretraining(
    cfg: TrainConfig,
    dataset: Sequence[ImageChip] | LabeledChips,
    seed: int,
    *,
    encoder_spec: EncoderSpec | None = None,
    n_classes: int = 10,
    aug_cfg: AugConfig | None = None,
    hog_cfg: HogConfig | None = None,
    on_epoch_end: Callable[[DualStreamModel, EpochReport, MemoryBank], None] | None = None,
) -> tuple[DualStreamModel, list[EpochReport], MemoryBank]:
    """Full pretraining run: deterministic given the seed in single-worker
    mode. The first epoch trains without a bank (no negatives, FNSE
    inactive); each epoch ends by refreshing pseudo-labels and rebuilding
    the bank, so epoch e >= 2 sees the epoch e-1 bank.
    """
    spec = encoder_spec if encoder_spec is not None else EncoderSpec()
    data = PretrainData(dataset, aug_cfg=aug_cfg, hog_cfg=hog_cfg)
    model = init_model(spec, n_classes, seed, momentum=cfg.ema_momentum)
    optimizer = make_optimizer(model, cfg)
    scheduler = CosineAnnealingLR(optimizer, T_max=cfg.epochs)

    bank: MemoryBank | None = None
    reports: list[EpochReport] = []
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        for epoch in range(1, cfg.epochs + 1):
            rng = np.random.default_rng([seed, epoch])
            report, feats, records = train_epoch(
                model, data, cfg, bank, epoch=epoch, rng=rng, optimizer=optimizer
            )
            bank = rebuild_bank(feats, records, epoch)
            scheduler.step()
            reports.append(report)
            if on_epoch_end is not None:
                on_epoch_end(model, report, bank)
    assert bank is not None
    return model, reports, bank
