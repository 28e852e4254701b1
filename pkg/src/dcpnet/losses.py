"""The four training objectives: handcrafted prediction, instance contrast,
cluster consistency, and their weighted combination.

All similarities are computed on L2-normalized features, so every loss is
invariant to positive rescaling of its inputs and the temperature keeps its
conventional meaning.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn.functional as F

from .errors import ConfigError, DegenerateInputError

_NORM_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Convex coefficients of the overall objective."""

    alpha: float = 0.2
    beta: float = 0.6
    gamma: float = 0.2

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0.0:
            raise ConfigError(f"loss weights must be non-negative, got {self}")
        total = self.alpha + self.beta + self.gamma
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"loss weights must sum to 1, got {total!r}")


@dataclass(frozen=True)
class Temperature:
    tau: float = 0.2

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ConfigError(f"temperature must be positive, got {self.tau}")


def _tau(tau: Temperature | float) -> float:
    return tau.tau if isinstance(tau, Temperature) else float(tau)


def _normalize(x: torch.Tensor, what: str) -> torch.Tensor:
    norms = x.norm(dim=-1, keepdim=True)
    if (norms < _NORM_EPS).any():
        raise DegenerateInputError(f"zero-norm {what} cannot be normalized")
    return x / norms


def hand_prediction_loss(z_pred: torch.Tensor, x_h: torch.Tensor) -> torch.Tensor:
    """Cosine prediction loss 2 - 2*cos(z_pred, x_h), averaged over rows.

    The target ``x_h`` is treated as a constant (no gradient). Range [0, 4].
    """
    if z_pred.shape != x_h.shape:
        raise ValueError(f"shape mismatch: {tuple(z_pred.shape)} vs {tuple(x_h.shape)}")
    zp = _normalize(z_pred, "prediction")
    xh = _normalize(x_h.detach(), "target")
    cos = (zp * xh).sum(dim=-1)
    return (2.0 - 2.0 * cos).mean()


def instance_contrastive_loss(
    anchor_feats: torch.Tensor,
    positive_feats: torch.Tensor,
    filtered_banks: Sequence[torch.Tensor],
    tau: Temperature | float = Temperature(),
) -> torch.Tensor:
    """InfoNCE over (anchor, positive) pairs against per-anchor negative sets.

    ``filtered_banks[i]`` holds the negatives surviving elimination for anchor
    i (possibly empty). Bank entries receive no gradient. With no negatives a
    term reduces to its positive-only value, 0.
    """
    if anchor_feats.ndim != 2 or anchor_feats.shape[0] == 0:
        raise ValueError(f"anchors must be a nonempty N x d matrix, got {tuple(anchor_feats.shape)}")
    if anchor_feats.shape != positive_feats.shape:
        raise ValueError(
            f"anchor/positive shape mismatch: {tuple(anchor_feats.shape)} vs {tuple(positive_feats.shape)}"
        )
    n = anchor_feats.shape[0]
    if len(filtered_banks) != n:
        raise ValueError(f"{len(filtered_banks)} negative sets for {n} anchors")
    t = _tau(tau)
    anchors = _normalize(anchor_feats, "anchor")
    positives = _normalize(positive_feats, "positive")
    terms = []
    for i in range(n):
        pos_logit = (anchors[i] * positives[i]).sum() / t
        negs = filtered_banks[i]
        if negs is None or negs.numel() == 0:
            terms.append(torch.zeros((), dtype=anchors.dtype, device=anchors.device))
            continue
        if negs.shape[-1] != anchors.shape[1]:
            raise ValueError(
                f"negative dim {negs.shape[-1]} != feature dim {anchors.shape[1]}"
            )
        neg = _normalize(negs.detach(), "negative")
        neg_logits = neg @ anchors[i] / t
        logits = torch.cat([pos_logit.view(1), neg_logits])
        terms.append(torch.logsumexp(logits, dim=0) - pos_logit)
    return torch.stack(terms).mean()


def cluster_consistency_loss(
    c_p: torch.Tensor,
    c_q: torch.Tensor,
    tau: Temperature | float = Temperature(),
) -> torch.Tensor:
    """Cross-view contrast between per-cluster assignment columns.

    ``c_p``/``c_q`` are N x M matrices of class probabilities under two
    augmentations; column i of each is cluster i's distribution over the
    batch. Cluster i's positives are the matching columns across views, its
    negatives the other M-1 columns of the opposite view. Gradients flow to
    both matrices.
    """
    if c_p.shape != c_q.shape:
        raise ValueError(f"shape mismatch: {tuple(c_p.shape)} vs {tuple(c_q.shape)}")
    if c_p.ndim != 2:
        raise ValueError(f"cluster matrices must be 2-D, got {tuple(c_p.shape)}")
    m = c_p.shape[1]
    if m < 2:
        raise ValueError(f"need at least 2 clusters for negatives, got M={m}")
    t = _tau(tau)
    cp = _normalize(c_p.T, "cluster column")  # M x N
    cq = _normalize(c_q.T, "cluster column")
    sim = cp @ cq.T / t  # sim[i, j] = s(c_p^i, c_q^j) / tau
    pos = sim.diagonal()
    return (torch.logsumexp(sim, dim=1) - pos).mean()


def overall_loss(
    l_hand: torch.Tensor | float,
    l_inst: torch.Tensor | float,
    l_clust: torch.Tensor | float,
    w: LossWeights,
) -> torch.Tensor | float:
    """Convex combination of the three objectives."""
    return w.alpha * l_hand + w.beta * l_inst + w.gamma * l_clust
