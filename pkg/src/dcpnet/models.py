"""Network topology: online encoder, momentum target encoder, projector,
prediction head, and the shared class-probability head.

The online branch (weak view) trains end-to-end; the target branch (strong
and handcrafted views) receives no gradient and follows the online branch
through exponential moving averages of its parameters. A single classifier
head maps projector outputs of every view to class probabilities.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torchvision.models import resnet18, resnet34, resnet50

from .chips import ViewTriple
from .errors import ConfigError, StateError

BACKBONE_FAMILIES = ("tiny", "resnet18", "resnet34", "resnet50")


@dataclass(frozen=True)
class EncoderSpec:
    """Backbone family plus head widths.

    feature_dim is the backbone output width; leave it None to have
    init_model probe it from a dummy forward pass. ``tiny`` is a small
    convnet for desk-scale runs and tests.
    """

    backbone_family: str = "resnet18"
    feature_dim: int | None = None
    projection_dim: int = 128

    def __post_init__(self):
        if self.backbone_family not in BACKBONE_FAMILIES:
            raise ConfigError(
                f"unsupported backbone {self.backbone_family!r}; expected one of {BACKBONE_FAMILIES}"
            )
        if self.projection_dim < 1:
            raise ConfigError(f"projection_dim must be positive, got {self.projection_dim}")
        if self.feature_dim is not None and self.projection_dim > self.feature_dim:
            raise ConfigError(
                f"projection_dim {self.projection_dim} exceeds feature_dim {self.feature_dim}"
            )


def _tiny_backbone() -> nn.Module:
    def block(cin, cout):
        return [nn.Conv2d(cin, cout, 3, stride=2, padding=1, bias=False), nn.BatchNorm2d(cout), nn.ReLU(inplace=True)]

    return nn.Sequential(
        *block(1, 16), *block(16, 32), *block(32, 64),
        nn.AdaptiveAvgPool2d(1), nn.Flatten(),
    )


def _resnet_backbone(family: str) -> nn.Module:
    net = {"resnet18": resnet18, "resnet34": resnet34, "resnet50": resnet50}[family](weights=None)
    net.conv1 = nn.Conv2d(1, 64, kernel_size=7, stride=2, padding=3, bias=False)
    net.fc = nn.Identity()
    return net


def build_backbone(family: str) -> tuple[nn.Module, int]:
    """Construct a single-channel backbone and probe its output width."""
    net = _tiny_backbone() if family == "tiny" else _resnet_backbone(family)
    was_training = net.training
    net.eval()
    with torch.no_grad():
        width = net(torch.zeros(1, 1, 64, 64)).shape[1]
    net.train(was_training)
    return net, int(width)


def _mlp_head(in_dim: int, out_dim: int) -> nn.Module:
    # two linear layers with a BN + ReLU between them
    return nn.Sequential(
        nn.Linear(in_dim, in_dim),
        nn.BatchNorm1d(in_dim),
        nn.ReLU(inplace=True),
        nn.Linear(in_dim, out_dim),
    )


@dataclass
class ViewOutputs:
    """Per-batch embeddings and class distributions from forward_views."""

    z_w: torch.Tensor
    z_s: torch.Tensor
    x_h: torch.Tensor
    z_pred: torch.Tensor
    cluster_dists: dict[str, torch.Tensor]
    class_probs_w: torch.Tensor
    class_probs_s: torch.Tensor


class DualStreamModel(nn.Module):
    """Holds every parameter group and the EMA momentum coefficient."""

    def __init__(self, spec: EncoderSpec, n_classes: int, momentum: float = 0.999):
        super().__init__()
        if n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {n_classes}")
        if not 0.0 <= momentum <= 1.0:
            raise ConfigError(f"momentum must lie in [0,1], got {momentum}")
        backbone, feature_dim = build_backbone(spec.backbone_family)
        spec = replace(spec, feature_dim=feature_dim)

        self.spec = spec
        self.n_classes = n_classes
        self.momentum = momentum
        self.encoder_w = backbone
        self.projector_w = _mlp_head(feature_dim, spec.projection_dim)
        self.encoder_s = copy.deepcopy(self.encoder_w)
        self.projector_s = copy.deepcopy(self.projector_w)
        self.predictor = _mlp_head(spec.projection_dim, spec.projection_dim)
        self.classifier = nn.Linear(spec.projection_dim, n_classes)
        for p in self.target_parameters():
            p.requires_grad_(False)

    # parameter groups

    def online_parameters(self) -> Iterator[nn.Parameter]:
        yield from self.encoder_w.parameters()
        yield from self.projector_w.parameters()

    def target_parameters(self) -> Iterator[nn.Parameter]:
        yield from self.encoder_s.parameters()
        yield from self.projector_s.parameters()

    def trainable_parameters(self) -> Iterator[nn.Parameter]:
        yield from self.online_parameters()
        yield from self.predictor.parameters()
        yield from self.classifier.parameters()

    # forward passes

    def embed_online(self, images: torch.Tensor) -> torch.Tensor:
        """Online-branch backbone features (pre-projector), unnormalized."""
        return self.encoder_w(images)

    def _project_w(self, images: torch.Tensor) -> torch.Tensor:
        return self.projector_w(self.encoder_w(images))

    def _project_s(self, images: torch.Tensor) -> torch.Tensor:
        return self.projector_s(self.encoder_s(images))


def views_to_tensors(batch: Sequence[ViewTriple]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    def stack(which: str) -> torch.Tensor:
        arrs = [np.asarray(getattr(v, which).pixels, dtype=np.float32) for v in batch]
        return torch.from_numpy(np.stack(arrs)).unsqueeze(1)

    return stack("weak"), stack("strong"), stack("handcrafted")


def forward_views(model: DualStreamModel, batch: Sequence[ViewTriple] | tuple) -> ViewOutputs:
    """Run the three views through their branches.

    Weak views go through the online encoder into the predictor and the
    classifier; strong and handcrafted views go through the target encoder
    under no_grad. Embeddings come back L2-normalized; cluster rows are
    softmax distributions. Accepts a ViewTriple batch or a pre-stacked
    (weak, strong, hand) tensor tuple.
    """
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    if isinstance(batch, tuple) and torch.is_tensor(batch[0]):
        weak, strong, hand = batch
    else:
        weak, strong, hand = views_to_tensors(batch)

    proj_w = model._project_w(weak)
    z_pred = model.predictor(proj_w)
    with torch.no_grad():
        proj_s = model._project_s(strong)
        proj_h = model._project_s(hand)

    probs_w = F.softmax(model.classifier(proj_w), dim=1)
    probs_s = F.softmax(model.classifier(proj_s), dim=1)
    probs_h = F.softmax(model.classifier(proj_h), dim=1)

    return ViewOutputs(
        z_w=F.normalize(proj_w, dim=1),
        z_s=F.normalize(proj_s, dim=1),
        x_h=F.normalize(proj_h, dim=1),
        z_pred=F.normalize(z_pred, dim=1),
        cluster_dists={"weak": probs_w, "strong": probs_s, "handcrafted": probs_h},
        class_probs_w=probs_w,
        class_probs_s=probs_s,
    )


@torch.no_grad()
def momentum_update(model: DualStreamModel) -> None:
    """theta_s <- m * theta_s + (1 - m) * theta_w, elementwise."""
    m = model.momentum
    for p_s, p_w in zip(model.target_parameters(), model.online_parameters()):
        if p_s.shape != p_w.shape:
            raise StateError(f"parameter shape mismatch: {p_s.shape} vs {p_w.shape}")
        p_s.mul_(m).add_(p_w, alpha=1.0 - m)


def init_model(spec: EncoderSpec, n_classes: int, seed: int, momentum: float = 0.999) -> DualStreamModel:
    """Deterministically initialized model; target starts as an exact copy
    of the online branch."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = DualStreamModel(spec, n_classes, momentum=momentum)
    return model


def param_checksum(params: Iterable[torch.Tensor]) -> str:
    """Order-sensitive SHA-256 over raw parameter bytes."""
    digest = hashlib.sha256()
    for p in params:
        digest.update(p.detach().cpu().numpy().tobytes())
    return digest.hexdigest()
