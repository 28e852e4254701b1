"""Command-line entry point.

    dcpnet <command> --config <path> [--checkpoint <path>] [--seed N] [--plots]

Commands: pretrain, evaluate, ablate, full. The output directory comes from
the config, overridable with the DCPNET_OUTPUT_DIR environment variable.
Every artifact except run_meta.json (which carries timestamps) is
byte-reproducible given the same config and seed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .bank import MemoryBank
from .checkpoint import load_checkpoint, save_checkpoint
from .chips import LabeledChips, stratified_split
from .config import ExperimentConfig, load_config, save_config
from .errors import ConfigError, StateError
from .evaluation import EvalProtocol, EvalResult, evaluate_suite
from .ingest import ingest_directory
from .models import DualStreamModel, init_model
from .pretrain import AblationConfig, EpochReport, FnseConfig, run_pretraining
from .synth import generate

OUTPUT_DIR_ENV = "DCPNET_OUTPUT_DIR"
CHECKPOINT_EVERY = 10


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _load_dataset(cfg: ExperimentConfig) -> LabeledChips:
    if cfg.dataset.kind == "synthetic":
        return generate(cfg.dataset.synth)
    return ingest_directory(cfg.dataset.path, cfg.dataset.crop_size)


def _resolve_n_classes(cfg: ExperimentConfig, data: LabeledChips) -> int:
    if cfg.model.n_classes is not None:
        return cfg.model.n_classes
    if data.labels is None:
        raise ConfigError("model.n_classes is required for unlabeled datasets")
    return data.n_classes


def _split_for_eval(cfg: ExperimentConfig, data: LabeledChips) -> tuple[LabeledChips, LabeledChips]:
    if data.labels is None:
        raise StateError("evaluation requires a labeled dataset")
    return stratified_split(data, cfg.dataset.holdout_fraction, cfg.seed)


def _pretrain_corpus(cfg: ExperimentConfig, data: LabeledChips) -> LabeledChips:
    """Labeled data pretrains on the training split only, so the evaluation
    holdout stays unseen; unlabeled data pretrains on everything."""
    if data.labels is None:
        return data
    train, _ = _split_for_eval(cfg, data)
    return train


def _write_jsonl(reports: list[EpochReport], path: Path) -> None:
    with open(path, "w") as fh:
        for report in reports:
            fh.write(json.dumps(report.to_dict()) + "\n")


def _write_results(rows: list[tuple[EvalProtocol, EvalResult]], out_dir: Path) -> None:
    with open(out_dir / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "param", "runs", "accuracy_mean", "accuracy_std"])
        for protocol, result in rows:
            param = protocol.k if protocol.kind == "knn" else protocol.epochs
            writer.writerow(
                [
                    protocol.kind,
                    param,
                    protocol.runs,
                    f"{result.accuracy_mean:.4f}",
                    f"{result.accuracy_std:.4f}",
                ]
            )
    for i, (protocol, result) in enumerate(rows):
        for r, confusion in enumerate(result.run_confusions):
            name = f"confusion_{i:02d}_{protocol.kind}_run{r:02d}.csv"
            np.savetxt(out_dir / name, confusion, fmt="%d", delimiter=",")


def _plot_losses(reports: list[EpochReport], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    epochs = [r.epoch for r in reports]
    fig, ax = plt.subplots(figsize=(7, 4))
    for key, label in [
        ("mean_loss_hand", "hand"),
        ("mean_loss_inst", "instance"),
        ("mean_loss_clust", "cluster"),
        ("mean_loss_overall", "overall"),
    ]:
        ax.plot(epochs, [getattr(r, key) for r in reports], label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _plot_accuracy_bars(labels: list[str], means: list[float], stds: list[float], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(max(6, len(labels)), 4))
    ax.bar(range(len(labels)), means, yerr=stds, capsize=3)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_ylabel("accuracy (%)")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _run_pretraining_to_dir(
    cfg: ExperimentConfig,
    corpus: LabeledChips,
    n_classes: int,
    out_dir: Path,
    plots: bool,
) -> tuple[DualStreamModel, list[EpochReport], MemoryBank]:
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    def on_epoch_end(model: DualStreamModel, report: EpochReport, bank: MemoryBank) -> None:
        if report.epoch % CHECKPOINT_EVERY == 0:
            save_checkpoint(
                ckpt_dir / f"ckpt_epoch_{report.epoch:04d}.pt", model, bank, epoch=report.epoch
            )

    model, reports, bank = run_pretraining(
        cfg.train,
        corpus,
        cfg.seed,
        encoder_spec=cfg.model.spec,
        n_classes=n_classes,
        on_epoch_end=on_epoch_end,
    )
    save_checkpoint(ckpt_dir / "ckpt_final.pt", model, bank, epoch=cfg.train.epochs)
    _write_jsonl(reports, out_dir / "epochs.jsonl")
    if plots:
        _plot_losses(reports, out_dir / "loss_curves.png")
    return model, reports, bank


def _evaluate_to_dir(
    cfg: ExperimentConfig,
    model: DualStreamModel,
    bank: MemoryBank | None,
    data: LabeledChips,
    out_dir: Path,
    plots: bool,
) -> list[tuple[EvalProtocol, EvalResult]]:
    train_set, holdout = _split_for_eval(cfg, data)
    rows = evaluate_suite(model, bank, (train_set, holdout), list(cfg.eval), seed=cfg.seed)
    _write_results(rows, out_dir)
    if plots:
        labels = [
            f"{p.kind}(k={p.k})" if p.kind == "knn" else f"{p.kind}(ep={p.epochs})"
            for p, _ in rows
        ]
        _plot_accuracy_bars(
            labels,
            [r.accuracy_mean for _, r in rows],
            [r.accuracy_std for _, r in rows],
            out_dir / "accuracy_bars.png",
        )
    return rows


ABLATION_GRID = [
    (hand, clust, fnse_on)
    for hand in (True, False)
    for clust in (True, False)
    for fnse_on in (True, False)
]


def _ablation_variants(cfg: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    variants = []
    for hand, clust, fnse_on in ABLATION_GRID:
        train = dataclasses.replace(
            cfg.train,
            ablation=AblationConfig(hand_task=hand, cluster_task=clust),
            fnse=dataclasses.replace(cfg.train.fnse, enabled=fnse_on),
        )
        tag = f"hand{int(hand)}_clust{int(clust)}_fnse{int(fnse_on)}"
        variants.append((tag, dataclasses.replace(cfg, train=train)))
    direct = dataclasses.replace(
        cfg.train, ablation=AblationConfig(direct_contrast_mode=True)
    )
    variants.append(("direct_contrast", dataclasses.replace(cfg, train=direct)))
    return variants


def _cmd_pretrain(cfg: ExperimentConfig, out_dir: Path, plots: bool) -> None:
    data = _load_dataset(cfg)
    n_classes = _resolve_n_classes(cfg, data)
    corpus = _pretrain_corpus(cfg, data)
    _run_pretraining_to_dir(cfg, corpus, n_classes, out_dir, plots)


def _cmd_evaluate(cfg: ExperimentConfig, out_dir: Path, plots: bool, checkpoint: str | None) -> None:
    ckpt_path = Path(checkpoint) if checkpoint else out_dir / "checkpoints" / "ckpt_final.pt"
    model, bank, _ = load_checkpoint(ckpt_path)
    data = _load_dataset(cfg)
    _evaluate_to_dir(cfg, model, bank, data, out_dir, plots)


def _cmd_full(cfg: ExperimentConfig, out_dir: Path, plots: bool) -> None:
    data = _load_dataset(cfg)
    n_classes = _resolve_n_classes(cfg, data)
    corpus = _pretrain_corpus(cfg, data)
    model, _, bank = _run_pretraining_to_dir(cfg, corpus, n_classes, out_dir, plots)
    _evaluate_to_dir(cfg, model, bank, data, out_dir, plots)


def _first_knn_protocol(cfg: ExperimentConfig) -> EvalProtocol:
    for protocol in cfg.eval:
        if protocol.kind == "knn":
            return protocol
    return EvalProtocol(kind="knn")


def _cmd_ablate(cfg: ExperimentConfig, out_dir: Path, plots: bool) -> None:
    data = _load_dataset(cfg)
    n_classes = _resolve_n_classes(cfg, data)
    corpus = _pretrain_corpus(cfg, data)
    protocol = _first_knn_protocol(cfg)
    variant_dir = out_dir / "ablate"
    variant_dir.mkdir(parents=True, exist_ok=True)

    table = []
    for tag, variant_cfg in _ablation_variants(cfg):
        model, reports, bank = run_pretraining(
            variant_cfg.train,
            corpus,
            variant_cfg.seed,
            encoder_spec=variant_cfg.model.spec,
            n_classes=n_classes,
        )
        _write_jsonl(reports, variant_dir / f"epochs_{tag}.jsonl")
        train_set, holdout = _split_for_eval(variant_cfg, data)
        rows = evaluate_suite(model, bank, (train_set, holdout), [protocol], seed=variant_cfg.seed)
        result = rows[0][1]
        ablation = variant_cfg.train.ablation
        table.append(
            (
                tag,
                ablation.hand_task,
                ablation.cluster_task,
                variant_cfg.train.fnse.enabled,
                ablation.direct_contrast_mode,
                result.accuracy_mean,
                result.accuracy_std,
            )
        )

    with open(out_dir / "ablation.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["tag", "hand_task", "cluster_task", "fnse", "direct_contrast", "accuracy_mean", "accuracy_std"]
        )
        for row in table:
            writer.writerow(list(row[:5]) + [f"{row[5]:.4f}", f"{row[6]:.4f}"])
    if plots:
        _plot_accuracy_bars(
            [row[0] for row in table],
            [row[5] for row in table],
            [row[6] for row in table],
            out_dir / "ablation_bars.png",
        )


def run(
    cfg: ExperimentConfig,
    command: str,
    *,
    checkpoint: str | None = None,
    plots: bool = False,
) -> int:
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = _utc_now()
    save_config(cfg, out_dir / "config.yaml")

    if command == "pretrain":
        _cmd_pretrain(cfg, out_dir, plots)
    elif command == "evaluate":
        _cmd_evaluate(cfg, out_dir, plots, checkpoint)
    elif command == "full":
        _cmd_full(cfg, out_dir, plots)
    elif command == "ablate":
        _cmd_ablate(cfg, out_dir, plots)
    else:
        raise ConfigError(f"unknown command {command!r}")

    meta = {"command": command, "started": started, "finished": _utc_now(), "seed": cfg.seed}
    (out_dir / "run_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dcpnet",
        description="Self-supervised pretraining and evaluation for single-channel ship chips.",
    )
    parser.add_argument("command", choices=["pretrain", "evaluate", "ablate", "full"])
    parser.add_argument("--config", required=True, help="path to the YAML experiment config")
    parser.add_argument("--checkpoint", default=None, help="checkpoint path (evaluate)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--plots", action="store_true", help="write loss/accuracy plot images")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        override = os.environ.get(OUTPUT_DIR_ENV)
        if override:
            cfg = dataclasses.replace(cfg, output_dir=override)
        return run(cfg, args.command, checkpoint=args.checkpoint, plots=args.plots)
    except Exception as exc:  # surface a one-line error and a nonzero exit
        print(f"dcpnet: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
