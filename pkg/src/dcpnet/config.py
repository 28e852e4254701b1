"""Experiment configuration: a nested YAML file with strict key checking.

Unknown keys are rejected by name so typos cannot silently fall back to
defaults. A minimal config needs only the dataset block and output_dir;
everything else has the standard defaults (loss weights 0.2/0.6/0.2,
temperature 0.2, EMA momentum 0.999, confidence threshold 0.95, blend 0.7,
KNN k 45, crop size 224).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError
from .evaluation import EvalProtocol
from .losses import LossWeights, Temperature
from .models import EncoderSpec
from .pretrain import AblationConfig, FnseConfig, TrainConfig
from .synth import SynthSpec

DEFAULT_CROP_SIZE = 224
DEFAULT_HOLDOUT_FRACTION = 0.3


@dataclass(frozen=True)
class DatasetSection:
    kind: str = "synthetic"
    path: str | None = None
    crop_size: int = DEFAULT_CROP_SIZE
    holdout_fraction: float = DEFAULT_HOLDOUT_FRACTION
    synth: SynthSpec = field(default_factory=SynthSpec)

    def __post_init__(self):
        if self.kind not in ("directory", "synthetic"):
            raise ConfigError(f"dataset.kind must be 'directory' or 'synthetic', got {self.kind!r}")
        if self.kind == "directory":
            if self.path is None:
                raise ConfigError("dataset.path is required when dataset.kind is 'directory'")
            if not Path(self.path).is_dir():
                raise ConfigError(f"dataset.path does not exist: {self.path}")
        if self.crop_size < 1:
            raise ConfigError(f"dataset.crop_size must be positive, got {self.crop_size}")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError(
                f"dataset.holdout_fraction must lie in (0,1), got {self.holdout_fraction}"
            )


@dataclass(frozen=True)
class ModelSection:
    spec: EncoderSpec = field(default_factory=EncoderSpec)
    n_classes: int | None = None

    def __post_init__(self):
        if self.n_classes is not None and self.n_classes < 2:
            raise ConfigError(f"model.n_classes must be >= 2, got {self.n_classes}")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSection
    output_dir: str
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: tuple[EvalProtocol, ...] = (EvalProtocol(),)
    seed: int = 0

    def __post_init__(self):
        if not self.output_dir:
            raise ConfigError("output_dir must be a nonempty path")
        if not self.eval:
            raise ConfigError("eval must list at least one protocol")


def _check_keys(section: Mapping[str, Any], allowed: tuple[str, ...], context: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {context}{key!r}")


def _get(section: Mapping[str, Any], key: str, default: Any) -> Any:
    value = section.get(key, default)
    return default if value is None and default is not None else value


def _parse_dataset(section: Mapping[str, Any]) -> DatasetSection:
    _check_keys(section, ("kind", "path", "crop_size", "holdout_fraction", "synth"), "dataset.")
    synth_raw = section.get("synth") or {}
    _check_keys(
        synth_raw,
        ("n_classes", "chips_per_class", "chip_size", "speckle_level", "seed"),
        "dataset.synth.",
    )
    synth = SynthSpec(**synth_raw)
    return DatasetSection(
        kind=_get(section, "kind", "synthetic"),
        path=section.get("path"),
        crop_size=int(_get(section, "crop_size", DEFAULT_CROP_SIZE)),
        holdout_fraction=float(_get(section, "holdout_fraction", DEFAULT_HOLDOUT_FRACTION)),
        synth=synth,
    )


def _parse_model(section: Mapping[str, Any]) -> ModelSection:
    _check_keys(section, ("backbone_family", "feature_dim", "projection_dim", "n_classes"), "model.")
    spec = EncoderSpec(
        backbone_family=_get(section, "backbone_family", "resnet18"),
        feature_dim=section.get("feature_dim"),
        projection_dim=int(_get(section, "projection_dim", 128)),
    )
    n_classes = section.get("n_classes")
    return ModelSection(spec=spec, n_classes=None if n_classes is None else int(n_classes))


def _parse_train(section: Mapping[str, Any]) -> TrainConfig:
    _check_keys(
        section,
        (
            "epochs",
            "batch_size",
            "learning_rate",
            "weight_decay",
            "momentum",
            "ema_momentum",
            "loss_weights",
            "tau",
            "fnse",
            "ablation",
            "pseudo_label_source",
        ),
        "train.",
    )
    weights_raw = section.get("loss_weights") or {}
    _check_keys(weights_raw, ("alpha", "beta", "gamma"), "train.loss_weights.")
    fnse_raw = section.get("fnse") or {}
    _check_keys(fnse_raw, ("enabled", "threshold", "c"), "train.fnse.")
    ablation_raw = section.get("ablation") or {}
    _check_keys(
        ablation_raw, ("hand_task", "cluster_task", "direct_contrast_mode"), "train.ablation."
    )
    defaults = TrainConfig()
    try:
        weights = LossWeights(**weights_raw)
    except ConfigError as exc:
        raise ConfigError(f"train.loss_weights: {exc}") from exc
    try:
        return TrainConfig(
            epochs=int(_get(section, "epochs", defaults.epochs)),
            batch_size=int(_get(section, "batch_size", defaults.batch_size)),
            learning_rate=float(_get(section, "learning_rate", defaults.learning_rate)),
            weight_decay=float(_get(section, "weight_decay", defaults.weight_decay)),
            momentum=float(_get(section, "momentum", defaults.momentum)),
            ema_momentum=float(_get(section, "ema_momentum", defaults.ema_momentum)),
            loss_weights=weights,
            tau=Temperature(float(_get(section, "tau", defaults.tau.tau))),
            fnse=FnseConfig(**fnse_raw),
            ablation=AblationConfig(**ablation_raw),
            pseudo_label_source=_get(section, "pseudo_label_source", defaults.pseudo_label_source),
        )
    except ConfigError as exc:
        raise ConfigError(f"train: {exc}") from exc


def _parse_eval(entries: Any) -> tuple[EvalProtocol, ...]:
    if entries is None:
        return (EvalProtocol(),)
    if not isinstance(entries, list):
        raise ConfigError("eval must be a list of protocol blocks")
    protocols = []
    for i, raw in enumerate(entries):
        _check_keys(raw, ("kind", "k", "epochs", "runs"), f"eval[{i}].")
        protocols.append(EvalProtocol(**raw))
    return tuple(protocols)


def parse_config(raw: Mapping[str, Any]) -> ExperimentConfig:
    if not isinstance(raw, Mapping):
        raise ConfigError("config root must be a mapping")
    _check_keys(raw, ("dataset", "model", "train", "eval", "output_dir", "seed"), "")
    if "dataset" not in raw:
        raise ConfigError("missing required key 'dataset'")
    if "output_dir" not in raw or not raw["output_dir"]:
        raise ConfigError("missing required key 'output_dir'")
    return ExperimentConfig(
        dataset=_parse_dataset(raw["dataset"] or {}),
        model=_parse_model(raw.get("model") or {}),
        train=_parse_train(raw.get("train") or {}),
        eval=_parse_eval(raw.get("eval")),
        output_dir=str(raw["output_dir"]),
        seed=int(_get(raw, "seed", 0)),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a YAML experiment config, applying defaults."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} failed to parse: {exc}") from exc
    if raw is None:
        raise ConfigError(f"config file {path} is empty")
    return parse_config(raw)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "dataset": {
            "kind": cfg.dataset.kind,
            "path": cfg.dataset.path,
            "crop_size": cfg.dataset.crop_size,
            "holdout_fraction": cfg.dataset.holdout_fraction,
            "synth": {
                "n_classes": cfg.dataset.synth.n_classes,
                "chips_per_class": cfg.dataset.synth.chips_per_class,
                "chip_size": cfg.dataset.synth.chip_size,
                "speckle_level": cfg.dataset.synth.speckle_level,
                "seed": cfg.dataset.synth.seed,
            },
        },
        "model": {
            "backbone_family": cfg.model.spec.backbone_family,
            "feature_dim": cfg.model.spec.feature_dim,
            "projection_dim": cfg.model.spec.projection_dim,
            "n_classes": cfg.model.n_classes,
        },
        "train": {
            "epochs": cfg.train.epochs,
            "batch_size": cfg.train.batch_size,
            "learning_rate": cfg.train.learning_rate,
            "weight_decay": cfg.train.weight_decay,
            "momentum": cfg.train.momentum,
            "ema_momentum": cfg.train.ema_momentum,
            "loss_weights": {
                "alpha": cfg.train.loss_weights.alpha,
                "beta": cfg.train.loss_weights.beta,
                "gamma": cfg.train.loss_weights.gamma,
            },
            "tau": cfg.train.tau.tau,
            "fnse": {
                "enabled": cfg.train.fnse.enabled,
                "threshold": cfg.train.fnse.threshold,
                "c": cfg.train.fnse.c,
            },
            "ablation": {
                "hand_task": cfg.train.ablation.hand_task,
                "cluster_task": cfg.train.ablation.cluster_task,
                "direct_contrast_mode": cfg.train.ablation.direct_contrast_mode,
            },
            "pseudo_label_source": cfg.train.pseudo_label_source,
        },
        "eval": [
            {"kind": p.kind, "k": p.k, "epochs": p.epochs, "runs": p.runs} for p in cfg.eval
        ],
        "output_dir": cfg.output_dir,
        "seed": cfg.seed,
    }


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    """Serialize so that load_config(save_config(cfg)) == cfg."""
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False))
