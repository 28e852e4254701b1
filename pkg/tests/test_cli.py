"""Command-line entry point: artifact layout, determinism, error handling."""

import json

import numpy as np
import pytest
import yaml

from dcpnet.cli import OUTPUT_DIR_ENV, main


def write_cfg(tmp_path, out_dir, epochs=2, eval_blocks=None, seed=3):
    cfg = {
        "dataset": {
            "kind": "synthetic",
            "holdout_fraction": 0.3,
            "synth": {"n_classes": 2, "chips_per_class": 20, "chip_size": 16, "speckle_level": 0.5, "seed": 1},
        },
        "model": {"backbone_family": "tiny", "projection_dim": 16},
        "train": {"epochs": epochs, "batch_size": 16, "learning_rate": 0.05},
        "eval": eval_blocks or [{"kind": "knn", "k": 5}],
        "output_dir": str(out_dir),
        "seed": seed,
    }
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def read_rows(path):
    return [line for line in path.read_text().strip().splitlines()]


def test_full_run_writes_the_complete_artifact_set(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, out, eval_blocks=[{"kind": "knn", "k": 5}, {"kind": "ft1", "epochs": 3, "runs": 2}])
    assert main(["full", "--config", str(cfg)]) == 0

    assert (out / "config.yaml").is_file()
    assert (out / "checkpoints" / "ckpt_final.pt").is_file()

    reports = [json.loads(line) for line in read_rows(out / "epochs.jsonl")]
    assert [r["epoch"] for r in reports] == [1, 2]
    assert reports[0]["bank_size"] == 0 and reports[1]["bank_size"] == 28

    rows = read_rows(out / "results.csv")
    assert rows[0] == "kind,param,runs,accuracy_mean,accuracy_std"
    assert len(rows) == 3
    assert rows[1].startswith("knn,5,1,") and rows[2].startswith("ft1,3,2,")

    confusions = sorted(p.name for p in out.glob("confusion_*.csv"))
    assert confusions == [
        "confusion_00_knn_run00.csv",
        "confusion_01_ft1_run00.csv",
        "confusion_01_ft1_run01.csv",
    ]
    conf = np.loadtxt(out / confusions[0], delimiter=",")
    assert conf.sum() == 12  # 30% holdout of 40 chips

    meta = json.loads((out / "run_meta.json").read_text())
    assert meta["command"] == "full" and meta["seed"] == 3


def test_periodic_checkpoints_follow_the_cadence(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, out, epochs=10)
    assert main(["pretrain", "--config", str(cfg)]) == 0
    names = sorted(p.name for p in (out / "checkpoints").glob("*.pt"))
    assert names == ["ckpt_epoch_0010.pt", "ckpt_final.pt"]


def test_evaluate_twice_reproduces_the_results_table(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, out)
    assert main(["full", "--config", str(cfg)]) == 0
    first = (out / "results.csv").read_bytes()
    first_conf = (out / "confusion_00_knn_run00.csv").read_bytes()

    assert main(["evaluate", "--config", str(cfg)]) == 0
    assert (out / "results.csv").read_bytes() == first
    assert (out / "confusion_00_knn_run00.csv").read_bytes() == first_conf


def test_evaluate_with_explicit_checkpoint_path(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, out)
    assert main(["pretrain", "--config", str(cfg)]) == 0
    ckpt = out / "checkpoints" / "ckpt_final.pt"
    assert main(["evaluate", "--config", str(cfg), "--checkpoint", str(ckpt)]) == 0
    assert (out / "results.csv").is_file()


def test_missing_checkpoint_is_a_clean_error(tmp_path, capsys):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, out)
    code = main(["evaluate", "--config", str(cfg), "--checkpoint", str(tmp_path / "nope.pt")])
    assert code == 1
    assert "dcpnet: error:" in capsys.readouterr().err


def test_broken_config_is_a_clean_error(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("dataset:\n  kind: synthetic\n  bogus_key: 1\noutput_dir: o\n")
    assert main(["full", "--config", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "dcpnet: error:" in err and "bogus_key" in err


def test_ablation_grid_emits_nine_rows(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, out, epochs=2)
    assert main(["ablate", "--config", str(cfg)]) == 0
    rows = read_rows(out / "ablation.csv")
    assert rows[0] == "tag,hand_task,cluster_task,fnse,direct_contrast,accuracy_mean,accuracy_std"
    assert len(rows) == 10  # header + 8 toggle combinations + direct-contrast
    tags = [r.split(",")[0] for r in rows[1:]]
    assert len(set(tags)) == 9 and "direct_contrast" in tags
    logs = sorted(p.name for p in (out / "ablate").glob("epochs_*.jsonl"))
    assert len(logs) == 9


def test_seed_flag_overrides_the_config(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, out, seed=3)
    assert main(["pretrain", "--config", str(cfg), "--seed", "9"]) == 0
    meta = json.loads((out / "run_meta.json").read_text())
    saved = yaml.safe_load((out / "config.yaml").read_text())
    assert meta["seed"] == 9 and saved["seed"] == 9


def test_output_dir_env_var_wins(tmp_path, monkeypatch):
    override = tmp_path / "elsewhere"
    cfg = write_cfg(tmp_path, tmp_path / "ignored")
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(override))
    assert main(["pretrain", "--config", str(cfg)]) == 0
    assert (override / "epochs.jsonl").is_file()
    assert not (tmp_path / "ignored").exists()


def test_plot_flag_writes_images(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, out)
    assert main(["full", "--config", str(cfg), "--plots"]) == 0
    assert (out / "loss_curves.png").stat().st_size > 0
    assert (out / "accuracy_bars.png").stat().st_size > 0
