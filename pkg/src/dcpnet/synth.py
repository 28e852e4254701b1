"""Synthetic single-channel chips that mimic ship crops in radar imagery.

Each class is an elongated bright blob at a class-specific orientation and
aspect ratio on a dark background, degraded by multiplicative speckle drawn
from a unit-mean gamma distribution. Geometry jitter and speckle come from
independent seed streams, so changing speckle_level never changes the
underlying templates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .chips import ImageChip, LabeledChips
from .errors import ConfigError

_BACKGROUND = 0.08
_AMPLITUDE = 0.85
_BASE_ASPECT = 2.6
_LENGTH_FRACTION = 0.55
_CENTER_JITTER = 0.10
_LENGTH_JITTER = 0.20
_ANGLE_JITTER_DEG = 7.0


@dataclass(frozen=True)
class SynthSpec:
    """Shape and noise parameters for a generated dataset."""

    n_classes: int = 3
    chips_per_class: int = 100
    chip_size: int = 64
    speckle_level: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ConfigError(f"n_classes must be >= 2, got {self.n_classes}")
        if self.chips_per_class < 1:
            raise ConfigError(f"chips_per_class must be >= 1, got {self.chips_per_class}")
        if self.chip_size < 8 or self.chip_size % 8 != 0:
            # handcrafted-view cells are 8x8 by default; chips must tile evenly
            raise ConfigError(f"chip_size must be a positive multiple of 8, got {self.chip_size}")
        if self.speckle_level < 0:
            raise ConfigError(f"speckle_level must be >= 0, got {self.speckle_level}")


def class_angle_deg(label: int, n_classes: int) -> float:
    """Canonical blob orientation for a class, spread evenly over [0, 180)."""
    return 15.0 + 180.0 * label / n_classes


def blob_template(
    size: int,
    angle_deg: float,
    length: float,
    aspect: float,
    center_row: float,
    center_col: float,
) -> np.ndarray:
    """Noise-free chip: anisotropic Gaussian ridge over a flat background."""
    rows = np.arange(size, dtype=np.float64)[:, None] - center_row
    cols = np.arange(size, dtype=np.float64)[None, :] - center_col
    theta = np.deg2rad(angle_deg)
    # u runs along the blob axis, v across it
    u = cols * np.cos(theta) - rows * np.sin(theta)
    v = cols * np.sin(theta) + rows * np.cos(theta)
    sigma_u = length / 2.0
    sigma_v = max(length / aspect / 2.0, 0.75)
    body = np.exp(-0.5 * ((u / sigma_u) ** 2 + (v / sigma_v) ** 2))
    return _BACKGROUND + _AMPLITUDE * body


def speckle_field(rng: np.random.Generator, shape: tuple[int, int], level: float) -> np.ndarray:
    """Unit-mean gamma multiplier with variance level**2."""
    if level == 0.0:
        return np.ones(shape, dtype=np.float64)
    looks = 1.0 / (level * level)
    return rng.gamma(shape=looks, scale=1.0 / looks, size=shape)


def generate(spec: SynthSpec) -> LabeledChips:
    """Deterministic dataset of spec.n_classes * spec.chips_per_class chips,
    grouped by class (label i occupies the i-th contiguous block)."""
    geom_rng = np.random.default_rng([spec.seed, 1])
    noise_rng = np.random.default_rng([spec.seed, 2])
    size = spec.chip_size
    chips: list[ImageChip] = []
    labels: list[int] = []
    for label in range(spec.n_classes):
        aspect = _BASE_ASPECT + 0.4 * (label % 2)
        for _ in range(spec.chips_per_class):
            angle = class_angle_deg(label, spec.n_classes) + geom_rng.uniform(
                -_ANGLE_JITTER_DEG, _ANGLE_JITTER_DEG
            )
            length = size * _LENGTH_FRACTION * (
                1.0 + geom_rng.uniform(-_LENGTH_JITTER, _LENGTH_JITTER)
            )
            center_row = (size - 1) / 2.0 + geom_rng.uniform(-1, 1) * _CENTER_JITTER * size
            center_col = (size - 1) / 2.0 + geom_rng.uniform(-1, 1) * _CENTER_JITTER * size
            template = blob_template(size, angle, length, aspect, center_row, center_col)
            noisy = template * speckle_field(noise_rng, (size, size), spec.speckle_level)
            chips.append(ImageChip(np.clip(noisy, 0.0, 1.0).astype(np.float32)))
            labels.append(label)
    return LabeledChips(chips=chips, labels=np.asarray(labels, dtype=np.int64))


def write_dataset(data: LabeledChips, out_dir: str | Path) -> Path:
    """Save chips as 8-bit grayscale PNGs plus a labels.csv manifest."""
    if data.labels is None:
        raise ConfigError("write_dataset requires labeled chips")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, (chip, label) in enumerate(zip(data.chips, data.labels)):
        name = f"chip_{i:05d}.png"
        gray = np.clip(np.rint(chip.pixels * 255.0), 0, 255).astype(np.uint8)
        if not cv2.imwrite(str(out / name), gray):
            raise OSError(f"failed to write {out / name}")
        rows.append((name, int(label)))
    with open(out / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "label"])
        writer.writerows(rows)
    return out
