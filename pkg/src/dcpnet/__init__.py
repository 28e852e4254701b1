"""Dual-branch contrastive pretraining for single-channel ship chips, with
a handcrafted-feature prediction task, pseudo-label-filtered memory bank,
cluster consistency, and KNN/fine-tuning evaluation."""

from .augment import AugConfig, gaussian_blur, strong_augment, weak_augment
from .bank import (
    MemoryBank,
    PseudoLabelRecord,
    blend_pseudo_probs,
    confidence_mask,
    filter_negatives,
    rebuild_bank,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .chips import ImageChip, LabeledChips, ViewTriple, stratified_split
from .config import (
    DatasetSection,
    ExperimentConfig,
    ModelSection,
    load_config,
    parse_config,
    save_config,
)
from .errors import (
    ConfigError,
    DegenerateInputError,
    DimensionError,
    IngestionError,
    StateError,
)
from .evaluation import (
    EvalProtocol,
    EvalResult,
    encoder_features,
    evaluate_suite,
    fine_tune,
    knn_classify,
    knn_evaluate,
)
from .hog import HogConfig, cell_histograms, handcrafted_transform, hog_descriptor
from .ingest import ingest_directory
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
    ViewOutputs,
    forward_views,
    init_model,
    momentum_update,
    param_checksum,
)
from .pretrain import (
    AblationConfig,
    EpochReport,
    FnseConfig,
    PretrainData,
    TrainConfig,
    effective_weights,
    run_pretraining,
    train_epoch,
    update_pseudo_labels,
)
from .synth import SynthSpec, generate, write_dataset

__version__ = "0.1.0"

__all__ = [
    "AblationConfig",
    "AugConfig",
    "ConfigError",
    "DatasetSection",
    "DegenerateInputError",
    "DimensionError",
    "DualStreamModel",
    "EncoderSpec",
    "EpochReport",
    "EvalProtocol",
    "EvalResult",
    "ExperimentConfig",
    "FnseConfig",
    "HogConfig",
    "ImageChip",
    "IngestionError",
    "LabeledChips",
    "LossWeights",
    "MemoryBank",
    "ModelSection",
    "PretrainData",
    "PseudoLabelRecord",
    "StateError",
    "SynthSpec",
    "Temperature",
    "TrainConfig",
    "ViewOutputs",
    "ViewTriple",
    "blend_pseudo_probs",
    "cell_histograms",
    "cluster_consistency_loss",
    "confidence_mask",
    "encoder_features",
    "evaluate_suite",
    "filter_negatives",
    "fine_tune",
    "forward_views",
    "gaussian_blur",
    "generate",
    "hand_prediction_loss",
    "handcrafted_transform",
    "hog_descriptor",
    "ingest_directory",
    "init_model",
    "instance_contrastive_loss",
    "knn_classify",
    "knn_evaluate",
    "load_checkpoint",
    "load_config",
    "momentum_update",
    "overall_loss",
    "param_checksum",
    "parse_config",
    "rebuild_bank",
    "run_pretraining",
    "save_checkpoint",
    "save_config",
    "stratified_split",
    "strong_augment",
    "train_epoch",
    "update_pseudo_labels",
    "weak_augment",
    "write_dataset",
]
