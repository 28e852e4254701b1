"""Weak and strong stochastic augmentations for single-channel chips.

The weak pipeline (anchor view) is random resized crop + horizontal flip.
The strong pipeline (bank-enriching view) adds Gaussian blur and intensity
jitter on top of the weak operations, consuming the same leading random
draws so that degenerate blur/jitter settings reproduce the weak output
under an identical seed. Color jitter is reduced to brightness/contrast
because the chips are single-channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np
from scipy.ndimage import convolve1d

from .chips import ImageChip
from .errors import ConfigError, DimensionError


@dataclass(frozen=True)
class AugConfig:
    """Stochastic augmentation parameters.

    crop_scale_range: range of the sampled crop area fraction.
    flip_probability: chance of a horizontal flip.
    blur_sigma_range: range of the sampled Gaussian blur sigma (strong only).
    jitter_strength: half-width of the brightness/contrast factor ranges
        (strong only); 0 disables jitter exactly.
    seed: base seed recorded for config bookkeeping; the ops themselves
        take an explicit generator.
    """

    crop_scale_range: tuple[float, float] = (0.2, 1.0)
    flip_probability: float = 0.5
    blur_sigma_range: tuple[float, float] = (0.1, 2.0)
    jitter_strength: float = 0.4
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.crop_scale_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ConfigError(f"crop_scale_range must satisfy 0 < lo <= hi <= 1, got {self.crop_scale_range}")
        blo, bhi = self.blur_sigma_range
        if not (0.0 <= blo <= bhi):
            raise ConfigError(f"blur_sigma_range must be ordered and non-negative, got {self.blur_sigma_range}")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ConfigError(f"flip_probability must lie in [0,1], got {self.flip_probability}")
        if self.jitter_strength < 0.0:
            raise ConfigError(f"jitter_strength must be non-negative, got {self.jitter_strength}")


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian kernel truncated at 3 sigma."""
    radius = max(1, int(math.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(pixels: np.ndarray, sigma: float) -> np.ndarray:
    """Separable blur with an explicitly normalized kernel, reflect boundary."""
    if sigma <= 0.0:
        return pixels
    k = gaussian_kernel_1d(sigma)
    out = convolve1d(pixels.astype(np.float64), k, axis=0, mode="reflect")
    out = convolve1d(out, k, axis=1, mode="reflect")
    return out.astype(np.float32)


def _random_square_crop(
    pixels: np.ndarray, scale_range: tuple[float, float], rng: np.random.Generator
) -> np.ndarray:
    """Crop a random square patch covering a sampled area fraction and resize back."""
    size = pixels.shape[0]
    scale = rng.uniform(scale_range[0], scale_range[1])
    side = int(round(math.sqrt(scale) * size))
    if side < 1:
        raise DimensionError(f"crop side collapsed to {side} px for a {size} px chip")
    side = min(side, size)
    top = int(rng.integers(0, size - side + 1))
    left = int(rng.integers(0, size - side + 1))
    patch = pixels[top : top + side, left : left + side]
    if patch.shape == (size, size):
        return patch.copy()
    return cv2.resize(patch, (size, size), interpolation=cv2.INTER_LINEAR)


def weak_augment(chip: ImageChip, cfg: AugConfig, rng: np.random.Generator) -> ImageChip:
    """Anchor view: random resized crop + horizontal flip, dims preserved."""
    if not chip.is_square:
        raise DimensionError(f"augmentation expects square chips, got {chip.pixels.shape}")
    out = _random_square_crop(chip.pixels, cfg.crop_scale_range, rng)
    if rng.random() < cfg.flip_probability:
        out = np.fliplr(out).copy()
    return ImageChip(np.clip(out, 0.0, 1.0))


def strong_augment(chip: ImageChip, cfg: AugConfig, rng: np.random.Generator) -> ImageChip:
    """Bank view: weak operations plus Gaussian blur and intensity jitter."""
    base = weak_augment(chip, cfg, rng)
    out = base.pixels
    sigma = rng.uniform(cfg.blur_sigma_range[0], cfg.blur_sigma_range[1])
    if sigma > 0.0:
        out = gaussian_blur(out, sigma)
    s = cfg.jitter_strength
    brightness = rng.uniform(1.0 - s, 1.0 + s)
    contrast = rng.uniform(1.0 - s, 1.0 + s)
    if s > 0.0:
        mean = out.mean()
        out = (mean + contrast * (out - mean)) * brightness
    return ImageChip(np.clip(out, 0.0, 1.0))
