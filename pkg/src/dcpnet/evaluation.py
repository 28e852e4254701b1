"""Evaluation protocols: weighted-KNN over a labeled feature bank, and the
three fine-tuning regimes (linear head, two-layer head, full network).

KNN uses encoder features of the labeled training split with ground-truth
labels. Fine-tuning attaches a classification head to the backbone; ft1 and
ft2 keep the encoder frozen, ftall trains everything.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .chips import ImageChip, LabeledChips
from .errors import ConfigError
from .models import DualStreamModel, _mlp_head

EVAL_KINDS = ("knn", "ft1", "ft2", "ftall")
KNN_VOTE_TAU = 0.07


@dataclass(frozen=True)
class EvalProtocol:
    """One evaluation recipe. k applies to knn; epochs to the fine-tuning
    kinds; runs controls the mean/std aggregation."""

    kind: str = "knn"
    k: int = 45
    epochs: int = 100
    runs: int = 1

    def __post_init__(self):
        if self.kind not in EVAL_KINDS:
            raise ConfigError(f"unknown protocol kind {self.kind!r}; expected one of {EVAL_KINDS}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")


@dataclass(frozen=True, eq=False)
class EvalResult:
    accuracy_mean: float
    accuracy_std: float
    per_class_accuracy: np.ndarray
    confusion: np.ndarray
    run_accuracies: tuple[float, ...] = field(default=())
    run_confusions: tuple[np.ndarray, ...] = field(default=())

    def __post_init__(self):
        if not 0.0 <= self.accuracy_mean <= 100.0:
            raise ValueError(f"accuracy_mean out of range: {self.accuracy_mean}")
        if self.accuracy_std < 0.0:
            raise ValueError(f"accuracy_std must be >= 0, got {self.accuracy_std}")


def chips_to_tensor(chips: list[ImageChip]) -> torch.Tensor:
    if not chips:
        raise ValueError("empty chip list")
    shape = chips[0].pixels.shape
    if any(c.pixels.shape != shape for c in chips):
        raise ValueError("all chips must share one shape")
    return torch.from_numpy(np.stack([c.pixels for c in chips])).unsqueeze(1)


@torch.no_grad()
def encoder_features(
    model: DualStreamModel, chips: list[ImageChip], batch_size: int = 256
) -> torch.Tensor:
    """Online-backbone features in eval mode, N x feature_dim, unnormalized."""
    was_training = model.training
    model.eval()
    parts = []
    for start in range(0, len(chips), batch_size):
        batch = chips_to_tensor(chips[start : start + batch_size])
        parts.append(model.embed_online(batch))
    model.train(was_training)
    return torch.cat(parts, dim=0)


def knn_classify(
    query_feat: np.ndarray,
    bank_feats: np.ndarray,
    bank_labels: np.ndarray,
    k: int,
    tau: float = KNN_VOTE_TAU,
    weighted: bool = True,
) -> int:
    """Weighted k-nearest-neighbor vote over cosine similarity.

    Picks the k bank rows most similar to the query, scores each class by
    the sum of e^(sim/tau) over its neighbors (or plain counts when
    weighted=False), and returns the best class, ties to the lowest index.
    """
    bank_feats = np.asarray(bank_feats, dtype=np.float64)
    bank_labels = np.asarray(bank_labels, dtype=np.int64)
    if bank_feats.ndim != 2 or bank_feats.shape[0] != bank_labels.shape[0]:
        raise ValueError("bank features and labels must align as KxD and K")
    n_bank = bank_feats.shape[0]
    if not 1 <= k <= n_bank:
        raise ValueError(f"k={k} must lie in [1, {n_bank}]")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")

    query = np.asarray(query_feat, dtype=np.float64).reshape(-1)
    norm = np.linalg.norm(query)
    if norm == 0.0:
        raise ValueError("query feature has zero norm")
    sims = bank_feats @ (query / norm)
    top = np.argsort(-sims, kind="stable")[:k]
    scores = np.zeros(int(bank_labels.max()) + 1, dtype=np.float64)
    votes = np.exp(sims[top] / tau) if weighted else np.ones(k)
    np.add.at(scores, bank_labels[top], votes)
    return int(np.argmax(scores))


def _accuracy_from_confusion(confusion: np.ndarray) -> tuple[float, np.ndarray]:
    total = confusion.sum()
    acc = 100.0 * np.trace(confusion) / total
    support = confusion.sum(axis=1)
    per_class = np.where(support > 0, 100.0 * np.diag(confusion) / np.maximum(support, 1), 0.0)
    return float(acc), per_class


def knn_evaluate(
    model: DualStreamModel,
    train_data: LabeledChips,
    test_data: LabeledChips,
    protocol: EvalProtocol,
    tau: float = KNN_VOTE_TAU,
    weighted: bool = True,
) -> np.ndarray:
    """Confusion matrix of weighted-KNN predictions on the held-out split."""
    if train_data.labels is None or test_data.labels is None:
        raise ValueError("knn evaluation requires labeled splits")
    bank = F.normalize(encoder_features(model, train_data.chips), dim=1).numpy()
    queries = encoder_features(model, test_data.chips).numpy()
    n_classes = int(max(train_data.labels.max(), test_data.labels.max())) + 1
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    for row, true in zip(queries, test_data.labels):
        pred = knn_classify(row, bank, train_data.labels, protocol.k, tau=tau, weighted=weighted)
        confusion[int(true), pred] += 1
    return confusion


def _build_head(kind: str, feature_dim: int, n_classes: int) -> nn.Module:
    if kind in ("ft1", "ftall"):
        return nn.Linear(feature_dim, n_classes)
    return _mlp_head(feature_dim, n_classes)


def _eval_confusion(logits: torch.Tensor, labels: np.ndarray, n_classes: int) -> np.ndarray:
    preds = logits.argmax(dim=1).numpy()
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)
    return confusion


def fine_tune(
    model: DualStreamModel,
    protocol: EvalProtocol,
    labeled_data: tuple[LabeledChips, LabeledChips],
    seed: int = 0,
) -> EvalResult:
    """Train the protocol head (and under ftall, the encoder) with
    cross-entropy, then score the held-out split.

    ft1/ft2 never touch encoder parameters: the head trains on features
    extracted once in eval mode. ftall trains the passed model in place;
    with runs > 1 every run restarts from the entry weights and the model
    is left holding the last run's weights.
    """
    if protocol.kind not in ("ft1", "ft2", "ftall"):
        raise ConfigError(f"fine_tune expects a fine-tuning protocol, got {protocol.kind!r}")
    train_set, test_set = labeled_data
    if len(train_set.chips) == 0 or len(test_set.chips) == 0:
        raise ValueError("fine-tuning requires nonempty train and test splits")
    if train_set.labels is None or test_set.labels is None:
        raise ValueError("fine-tuning requires labeled splits")

    n_classes = int(max(train_set.labels.max(), test_set.labels.max())) + 1
    feature_dim = model.spec.feature_dim
    assert feature_dim is not None
    frozen = protocol.kind in ("ft1", "ft2")

    if frozen:
        train_feats = encoder_features(model, train_set.chips)
        test_feats = encoder_features(model, test_set.chips)
    else:
        entry_state = copy.deepcopy(model.state_dict())
        train_images = chips_to_tensor(train_set.chips)

    train_labels = torch.from_numpy(train_set.labels)
    confusions = []
    accuracies = []
    per_class_runs = []
    for run in range(protocol.runs):
        run_seed = seed + run
        with torch.random.fork_rng():
            torch.manual_seed(run_seed)
            head = _build_head(protocol.kind, feature_dim, n_classes)
            if frozen:
                optimizer = torch.optim.Adam(head.parameters(), lr=1e-2)
                head.train()
                for _ in range(protocol.epochs):
                    optimizer.zero_grad(set_to_none=True)
                    loss = F.cross_entropy(head(train_feats), train_labels)
                    loss.backward()
                    optimizer.step()
                head.eval()
                with torch.no_grad():
                    logits = head(test_feats)
            else:
                model.load_state_dict(entry_state)
                optimizer = torch.optim.Adam(
                    [
                        {"params": model.encoder_w.parameters(), "lr": 1e-3},
                        {"params": head.parameters(), "lr": 1e-2},
                    ]
                )
                order_rng = np.random.default_rng(run_seed)
                model.train()
                head.train()
                batch = 64
                for _ in range(protocol.epochs):
                    order = order_rng.permutation(len(train_set.chips))
                    for start in range(0, len(order), batch):
                        idx = torch.from_numpy(order[start : start + batch])
                        if len(idx) == 1:
                            continue
                        optimizer.zero_grad(set_to_none=True)
                        feats = model.encoder_w(train_images[idx])
                        loss = F.cross_entropy(head(feats), train_labels[idx])
                        loss.backward()
                        optimizer.step()
                head.eval()
                with torch.no_grad():
                    logits = head(encoder_features(model, test_set.chips))

        confusion = _eval_confusion(logits, test_set.labels, n_classes)
        acc, per_class = _accuracy_from_confusion(confusion)
        confusions.append(confusion)
        accuracies.append(acc)
        per_class_runs.append(per_class)

    accs = np.asarray(accuracies, dtype=np.float64)
    return EvalResult(
        accuracy_mean=float(accs.mean()),
        accuracy_std=float(accs.std(ddof=0)),
        per_class_accuracy=np.mean(per_class_runs, axis=0),
        confusion=confusions[0],
        run_accuracies=tuple(accuracies),
        run_confusions=tuple(confusions),
    )


def evaluate_suite(
    model: DualStreamModel,
    bank,
    labeled_data: tuple[LabeledChips, LabeledChips],
    protocols: list[EvalProtocol],
    seed: int = 0,
    knn_tau: float = KNN_VOTE_TAU,
    knn_weighted: bool = True,
) -> list[tuple[EvalProtocol, EvalResult]]:
    """Run every protocol against a cloned model and collect results in
    order. Duplicate protocol entries are evaluated independently. The
    pretraining bank is accepted for interface symmetry; KNN builds its
    evaluation bank from the labeled training split with true labels.
    """
    del bank
    if not protocols:
        raise ConfigError("protocol list must be nonempty")
    train_set, test_set = labeled_data
    results: list[tuple[EvalProtocol, EvalResult]] = []
    for i, protocol in enumerate(protocols):
        clone = copy.deepcopy(model)
        if protocol.kind == "knn":
            accs = []
            per_class_runs = []
            confusions = []
            for _ in range(protocol.runs):
                confusion = knn_evaluate(
                    clone, train_set, test_set, protocol, tau=knn_tau, weighted=knn_weighted
                )
                acc, per_class = _accuracy_from_confusion(confusion)
                accs.append(acc)
                per_class_runs.append(per_class)
                confusions.append(confusion)
            arr = np.asarray(accs, dtype=np.float64)
            result = EvalResult(
                accuracy_mean=float(arr.mean()),
                accuracy_std=float(arr.std(ddof=0)),
                per_class_accuracy=np.mean(per_class_runs, axis=0),
                confusion=confusions[0],
                run_accuracies=tuple(accs),
                run_confusions=tuple(confusions),
            )
        else:
            result = fine_tune(clone, protocol, (train_set, test_set), seed=seed + 1000 * i)
        results.append((protocol, result))
    return results
