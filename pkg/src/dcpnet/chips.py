"""Core data containers: image chips, view triples, labeled collections."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError


@dataclass
class ImageChip:
    """Single-channel image with intensities in [0, 1].

    ``pixels`` is a 2-D float32 array; ``height``/``width`` mirror its shape.
    Ingested chips are square (side = crop size), but the container itself
    only enforces the value range.
    """

    pixels: np.ndarray
    height: int = field(init=False)
    width: int = field(init=False)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 2:
            raise DimensionError(f"chip pixels must be 2-D, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise DimensionError(f"chip must be non-empty, got shape {px.shape}")
        if px.min() < -1e-6 or px.max() > 1.0 + 1e-6:
            raise ValueError(
                f"chip intensities must lie in [0,1], got [{px.min():.4g}, {px.max():.4g}]"
            )
        self.pixels = np.clip(px, 0.0, 1.0)
        self.height, self.width = px.shape

    @property
    def is_square(self) -> bool:
        return self.height == self.width


@dataclass
class ViewTriple:
    """The three training views of one chip: weak, strong, handcrafted.

    All three share identical spatial dimensions. The handcrafted view is a
    deterministic function of the source chip.
    """

    weak: ImageChip
    strong: ImageChip
    handcrafted: ImageChip

    def __post_init__(self):
        shapes = {v.pixels.shape for v in (self.weak, self.strong, self.handcrafted)}
        if len(shapes) != 1:
            raise DimensionError(f"views must share spatial dimensions, got {shapes}")


@dataclass
class LabeledChips:
    """A chip collection with optional integer class labels."""

    chips: list[ImageChip]
    labels: np.ndarray | None = None

    def __post_init__(self):
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != len(self.chips):
                raise DimensionError(
                    f"{len(self.labels)} labels for {len(self.chips)} chips"
                )

    def __len__(self) -> int:
        return len(self.chips)

    @property
    def n_classes(self) -> int:
        if self.labels is None:
            raise ValueError("collection is unlabeled")
        return int(self.labels.max()) + 1


def stratified_split(
    data: LabeledChips, holdout_fraction: float, seed: int
) -> tuple[LabeledChips, LabeledChips]:
    """Deterministic per-class split into (train, holdout)."""
    if data.labels is None:
        raise ValueError("stratified_split requires labels")
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError(f"holdout_fraction must lie in (0,1), got {holdout_fraction}")
    rng = np.random.default_rng(seed)
    train_idx, hold_idx = [], []
    for cls in np.unique(data.labels):
        idx = np.flatnonzero(data.labels == cls)
        idx = idx[rng.permutation(len(idx))]
        n_hold = max(1, int(round(holdout_fraction * len(idx))))
        hold_idx.extend(idx[:n_hold])
        train_idx.extend(idx[n_hold:])
    train_idx = np.sort(np.asarray(train_idx))
    hold_idx = np.sort(np.asarray(hold_idx))
    return (
        LabeledChips([data.chips[i] for i in train_idx], data.labels[train_idx]),
        LabeledChips([data.chips[i] for i in hold_idx], data.labels[hold_idx]),
    )
