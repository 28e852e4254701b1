"""Load chip directories: grayscale images plus an optional labels.csv
manifest (filename,label). Ordering is always sorted by filename, so the
manifest row order never matters."""

from __future__ import annotations

import csv
import warnings
from pathlib import Path

import cv2
import numpy as np

from .chips import ImageChip, LabeledChips
from .errors import IngestionError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def _load_grayscale(path: Path) -> np.ndarray | None:
    image = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if image is None:
        return None
    return image.astype(np.float32) / 255.0


def center_crop_resize(pixels: np.ndarray, size: int) -> np.ndarray:
    """Crop the centered square, then resize to size x size."""
    h, w = pixels.shape
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    square = pixels[top : top + side, left : left + side]
    if side == size:
        return square
    interp = cv2.INTER_AREA if side > size else cv2.INTER_LINEAR
    return cv2.resize(square, (size, size), interpolation=interp)


def _read_manifest(path: Path) -> dict[str, int]:
    labels: dict[str, int] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:2]] != ["filename", "label"]:
            raise IngestionError(f"manifest {path} must start with a 'filename,label' header")
        for row in reader:
            if len(row) < 2:
                continue
            labels[row[0].strip()] = int(row[1])
    return labels


def ingest_directory(path: str | Path, crop_size: int) -> LabeledChips:
    """Read every grayscale image under path (non-recursive), normalized to
    [0,1] and center-cropped/resized to crop_size. Labeled iff labels.csv
    is present. Unreadable files are skipped with a warning."""
    root = Path(path)
    if not root.is_dir():
        raise IngestionError(f"not a directory: {root}")
    if crop_size < 1:
        raise ValueError(f"crop_size must be positive, got {crop_size}")

    manifest_path = root / "labels.csv"
    manifest = _read_manifest(manifest_path) if manifest_path.is_file() else None

    if manifest is not None:
        names = sorted(manifest)
    else:
        names = sorted(
            p.name for p in root.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
        )

    chips: list[ImageChip] = []
    labels: list[int] = []
    for name in names:
        file_path = root / name
        pixels = _load_grayscale(file_path) if file_path.is_file() else None
        if pixels is None:
            warnings.warn(f"skipping unreadable image {file_path}")
            continue
        chips.append(ImageChip(center_crop_resize(pixels, crop_size)))
        if manifest is not None:
            labels.append(manifest[name])

    if not chips:
        raise IngestionError(f"no readable chips found in {root}")
    return LabeledChips(
        chips=chips,
        labels=np.asarray(labels, dtype=np.int64) if manifest is not None else None,
    )
