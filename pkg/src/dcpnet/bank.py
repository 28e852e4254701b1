"""Epoch-level memory bank with pseudo-label blending and false-negative
elimination.

The bank is rebuilt wholesale at every epoch boundary from the target
encoder's strong-view features and is read-only in between. Elimination
removes a bank entry from an anchor's negative set only when both carry
reliable pseudo-labels and the labels match; anchors with unreliable labels
eliminate nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import DegenerateInputError


@dataclass(frozen=True)
class PseudoLabelRecord:
    """Blended class-probability vector with derived label and confidence."""

    probs: np.ndarray
    label: int = field(init=False)
    confidence: float = field(init=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 1:
            raise ValueError(f"probs must be a nonempty vector, got shape {probs.shape}")
        if probs.min() < -1e-9 or abs(probs.sum() - 1.0) > 1e-6:
            raise ValueError(f"probs is not a distribution (sum={probs.sum()!r})")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "label", int(np.argmax(probs)))  # ties -> lowest index
        object.__setattr__(self, "confidence", float(probs.max()))


@dataclass
class MemoryBank:
    """K unit-norm feature rows with aligned pseudo-label records."""

    features: torch.Tensor
    records: list[PseudoLabelRecord]
    source_epoch: int

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError(f"features must be K x d, got {tuple(self.features.shape)}")
        if self.features.shape[0] != len(self.records):
            raise ValueError(
                f"{self.features.shape[0]} feature rows for {len(self.records)} records"
            )
        self.labels = np.asarray([r.label for r in self.records], dtype=np.int64)
        self.confidences = np.asarray([r.confidence for r in self.records], dtype=np.float64)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def size(self) -> int:
        return self.features.shape[0]


def blend_pseudo_probs(p_w: np.ndarray, p_s: np.ndarray, c: float) -> PseudoLabelRecord:
    """Blend weak- and strong-view class probabilities: c*p_w + (1-c)*p_s."""
    p_w = np.asarray(p_w, dtype=np.float64)
    p_s = np.asarray(p_s, dtype=np.float64)
    if p_w.shape != p_s.shape:
        raise ValueError(f"probability shape mismatch: {p_w.shape} vs {p_s.shape}")
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"blend weight must lie in [0,1], got {c}")
    return PseudoLabelRecord(c * p_w + (1.0 - c) * p_s)


def confidence_mask(record: PseudoLabelRecord, threshold: float) -> bool:
    """True iff the record's pseudo-label is reliable (confidence >= threshold)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0,1), got {threshold}")
    return record.confidence >= threshold


def filter_negatives(
    anchor: PseudoLabelRecord, bank: MemoryBank, threshold: float
) -> np.ndarray:
    """Indices of bank entries kept as negatives for this anchor.

    An entry is eliminated only when the anchor is reliable, the entry is
    reliable, and their labels match. Unreliable anchors keep the full bank.
    """
    if len(bank) == 0:
        raise ValueError("bank is empty")
    if not confidence_mask(anchor, threshold):
        return np.arange(len(bank), dtype=np.int64)
    eliminate = (bank.confidences >= threshold) & (bank.labels == anchor.label)
    return np.flatnonzero(~eliminate).astype(np.int64)


def rebuild_bank(
    features: torch.Tensor, records: list[PseudoLabelRecord], epoch: int
) -> MemoryBank:
    """Replace the bank with L2-normalized copies of the epoch's features."""
    if features.ndim != 2 or features.shape[0] != len(records):
        raise ValueError(
            f"features shape {tuple(features.shape)} incompatible with {len(records)} records"
        )
    feats = features.detach().to(torch.float32)
    norms = feats.norm(dim=1, keepdim=True)
    if (norms < 1e-12).any():
        raise DegenerateInputError("zero-norm feature row cannot enter the bank")
    return MemoryBank(feats / norms, list(records), source_epoch=epoch)
