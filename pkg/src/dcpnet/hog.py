"""Histogram-of-oriented-gradients feature extraction and rendering.

The handcrafted view fed to the target encoder is a HOG response map: the
per-cell unsigned orientation histograms rendered back to image resolution
as oriented line segments, rescaled to [0,1]. The map is a pure function of
the source chip. The block-normalized descriptor vector is also exposed for
use as a plain feature (synthetic-data separability checks, external
analysis).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chips import ImageChip
from .errors import ConfigError


@dataclass(frozen=True)
class HogConfig:
    """Standard HOG parameters: unsigned gradients over [0, 180) degrees."""

    orientations: int = 9
    cell_size: int = 8
    block_size: int = 2  # cells per block side, L2 block normalization
    eps: float = 1e-6

    def __post_init__(self):
        if self.orientations < 1:
            raise ConfigError(f"orientations must be >= 1, got {self.orientations}")
        if self.cell_size < 1:
            raise ConfigError(f"cell_size must be >= 1, got {self.cell_size}")
        if self.block_size < 1:
            raise ConfigError(f"block_size must be >= 1, got {self.block_size}")


def image_gradients(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradients (d/drow, d/dcol), zero at the borders."""
    p = pixels.astype(np.float64)
    g_row = np.zeros_like(p)
    g_col = np.zeros_like(p)
    g_row[1:-1, :] = (p[2:, :] - p[:-2, :]) / 2.0
    g_col[:, 1:-1] = (p[:, 2:] - p[:, :-2]) / 2.0
    return g_row, g_col


def cell_histograms(chip: ImageChip, cfg: HogConfig) -> np.ndarray:
    """Per-cell unsigned orientation histograms, shape (cy, cx, orientations).

    Each pixel votes its full gradient magnitude into the bin containing its
    orientation (hard assignment).
    """
    cs = cfg.cell_size
    h, w = chip.pixels.shape
    if h % cs or w % cs:
        raise ConfigError(f"chip shape {(h, w)} not divisible by cell size {cs}")
    g_row, g_col = image_gradients(chip.pixels)
    mag = np.hypot(g_row, g_col)
    ori = np.degrees(np.arctan2(g_row, g_col)) % 180.0
    bins = np.minimum((ori / (180.0 / cfg.orientations)).astype(np.int64), cfg.orientations - 1)

    n_cy, n_cx = h // cs, w // cs
    hist = np.zeros((n_cy, n_cx, cfg.orientations), dtype=np.float64)
    cell_r = np.arange(h) // cs
    cell_c = np.arange(w) // cs
    flat_idx = (cell_r[:, None] * n_cx + cell_c[None, :]) * cfg.orientations + bins
    np.add.at(hist.reshape(-1), flat_idx.ravel(), mag.ravel())
    return hist


def block_descriptor(hist: np.ndarray, cfg: HogConfig) -> np.ndarray:
    """L2-normalized overlapping-block descriptor flattened to 1-D."""
    n_cy, n_cx, _ = hist.shape
    bs = cfg.block_size
    if n_cy < bs or n_cx < bs:
        raise ConfigError(f"{(n_cy, n_cx)} cells cannot form {bs}x{bs} blocks")
    blocks = []
    for by in range(n_cy - bs + 1):
        for bx in range(n_cx - bs + 1):
            v = hist[by : by + bs, bx : bx + bs].ravel()
            blocks.append(v / math.sqrt(float(v @ v) + cfg.eps**2))
    return np.concatenate(blocks)


def hog_descriptor(chip: ImageChip, cfg: HogConfig | None = None) -> np.ndarray:
    cfg = cfg or HogConfig()
    return block_descriptor(cell_histograms(chip, cfg), cfg)


def _line_stencil(alpha: float, cell_size: int) -> np.ndarray:
    """Boolean cell-sized mask of a segment through the cell center.

    The segment runs along the edge direction (perpendicular to the gradient
    angle ``alpha``) and is symmetrized under 180-degree cell rotation.
    """
    half = (cell_size - 1) / 2.0
    t = np.linspace(-1.0, 1.0, 8 * cell_size)
    d_row, d_col = math.cos(alpha), -math.sin(alpha)
    rr = np.clip(np.round(half + t * half * d_row).astype(np.int64), 0, cell_size - 1)
    cc = np.clip(np.round(half + t * half * d_col).astype(np.int64), 0, cell_size - 1)
    mask = np.zeros((cell_size, cell_size), dtype=bool)
    mask[rr, cc] = True
    return mask | mask[::-1, ::-1]


def bin_stencils(cfg: HogConfig) -> list[np.ndarray]:
    """Per-bin line stencils used by the renderer.

    For an even bin count, bins in the upper half are exact 90-degree
    rotations of their lower-half counterparts, so the rendering commutes
    with quarter-turn input rotations (bin shift = orientations/2).
    """
    n = cfg.orientations
    stencils: list[np.ndarray] = []
    for b in range(n):
        if n % 2 == 0 and b >= n // 2:
            stencils.append(np.rot90(stencils[b - n // 2]).copy())
        else:
            alpha = math.radians((b + 0.5) * 180.0 / n)
            stencils.append(_line_stencil(alpha, cfg.cell_size))
    return stencils


def render_histograms(hist: np.ndarray, cfg: HogConfig) -> np.ndarray:
    """Render per-cell histograms as oriented line segments at image resolution.

    Each bin adds a segment through the cell center along its edge direction,
    weighted by the bin value.
    """
    n_cy, n_cx, n_bins = hist.shape
    stencils = bin_stencils(cfg)
    out = np.zeros((n_cy * cfg.cell_size, n_cx * cfg.cell_size), dtype=np.float64)
    for b in range(n_bins):
        weights = hist[:, :, b]
        if weights.any():
            out += np.kron(weights, stencils[b].astype(np.float64))
    return out


def handcrafted_transform(chip: ImageChip, cfg: HogConfig | None = None) -> ImageChip:
    """Deterministic HOG response map of a chip, rescaled to [0,1]."""
    cfg = cfg or HogConfig()
    hist = cell_histograms(chip, cfg)
    img = render_histograms(hist, cfg)
    peak = img.max()
    if peak > 0.0:
        img = img / peak
    return ImageChip(img.astype(np.float32))
