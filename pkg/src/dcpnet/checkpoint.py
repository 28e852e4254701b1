"""Checkpoint serialization: model weights, architecture description, and
the final memory bank, restorable without the original config."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .bank import MemoryBank, PseudoLabelRecord
from .errors import StateError
from .models import DualStreamModel, EncoderSpec


def save_checkpoint(
    path: str | Path,
    model: DualStreamModel,
    bank: MemoryBank | None = None,
    epoch: int | None = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": 1,
        "backbone_family": model.spec.backbone_family,
        "projection_dim": model.spec.projection_dim,
        "n_classes": model.n_classes,
        "ema_momentum": model.momentum,
        "epoch": epoch,
        "model_state": model.state_dict(),
        "bank": None
        if bank is None
        else {
            "features": bank.features.numpy(),
            "probs": np.stack([r.probs for r in bank.records]),
            "source_epoch": bank.source_epoch,
        },
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path: str | Path) -> tuple[DualStreamModel, MemoryBank | None, dict]:
    path = Path(path)
    if not path.is_file():
        raise StateError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    spec = EncoderSpec(
        backbone_family=payload["backbone_family"],
        projection_dim=payload["projection_dim"],
    )
    model = DualStreamModel(spec, payload["n_classes"], momentum=payload["ema_momentum"])
    model.load_state_dict(payload["model_state"])
    model.eval()

    bank = None
    if payload["bank"] is not None:
        raw = payload["bank"]
        records = [PseudoLabelRecord(probs=row) for row in raw["probs"]]
        bank = MemoryBank(
            features=torch.from_numpy(raw["features"]),
            records=records,
            source_epoch=raw["source_epoch"],
        )
    meta = {"epoch": payload["epoch"], "format_version": payload["format_version"]}
    return model, bank, meta
