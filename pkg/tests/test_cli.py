import csv
import json

import numpy as np
import pytest

from tripletmine import cli
from tripletmine.core import l2_normalize, pairwise_squared_distances
from tripletmine.mining import MiningConfig, Strategy, mine
from tripletmine.sampler import LabeledDataset, save_dataset_csv


def write_config(tmp_path, name="config.json", **overrides):
    data = {
        "dataset": {
            "synthetic": {
                "identities": 8,
                "samples_per_identity": 12,
                "dim": 8,
                "identity_dim": 2,
                "seed": 1,
            }
        },
        "train": {
            "iterations": 100,
            "P": 3,
            "K": 3,
            "learning_rate": 0.02,
            "eval_interval": 50,
            "hidden_sizes": [16],
            "embed_dim": 6,
        },
        "eval": {"eval_identities": 3, "pairs_per_class": 12, "folds": 4},
        "seed": 0,
    }
    data.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def test_pretrain_writes_artifacts(tmp_path, capsys):
    config = write_config(tmp_path)
    out = tmp_path / "run"
    code = cli.main(["pretrain", "--config", str(config), "--out", str(out)])
    assert code == 0
    assert (out / "report.csv").exists()
    assert (out / "checkpoint.bin").exists()
    assert "train_accuracy" in capsys.readouterr().out


def test_missing_dataset_file_exits_2_naming_path(tmp_path, capsys):
    config = write_config(tmp_path, dataset={"csv_path": str(tmp_path / "absent.csv")})
    code = cli.main(["pretrain", "--config", str(config), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "absent.csv" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path, capsys):
    code = cli.main(["pretrain", "--config", str(tmp_path / "none.json")])
    assert code == 2
    assert "none.json" in capsys.readouterr().err


def test_invalid_config_json_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code = cli.main(["pretrain", "--config", str(bad)])
    assert code == 2
    assert "invalid JSON" in capsys.readouterr().err


def test_same_seed_reproduces_report_bytes(tmp_path):
    config = write_config(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["pretrain", "--config", str(config), "--seed", "7", "--out", str(out_a)]) == 0
    assert cli.main(["pretrain", "--config", str(config), "--seed", "7", "--out", str(out_b)]) == 0
    assert (out_a / "report.csv").read_bytes() == (out_b / "report.csv").read_bytes()
    assert (out_a / "checkpoint.bin").read_bytes() == (out_b / "checkpoint.bin").read_bytes()


def test_finetune_without_checkpoint_explains_pretraining(tmp_path, capsys):
    config = write_config(tmp_path)
    code = cli.main(["finetune", "--config", str(config), "--out", str(tmp_path / "fin")])
    assert code == 2
    assert "pretrain" in capsys.readouterr().err


def test_finetune_unknown_strategy_is_usage_error(tmp_path, capsys):
    config = write_config(tmp_path)
    with pytest.raises(SystemExit) as exc:
        cli.main(["finetune", "--config", str(config), "--strategy", "hardester"])
    assert exc.value.code == 2
    err = capsys.readouterr().err
    for name in ("all", "random", "min_min", "min_max", "hardest"):
        assert name in err


def test_pretrain_then_finetune_flow(tmp_path):
    config = write_config(tmp_path)
    pre_out = tmp_path / "pre"
    assert cli.main(["pretrain", "--config", str(config), "--out", str(pre_out)]) == 0
    fin_out = tmp_path / "fin"
    code = cli.main(
        [
            "finetune",
            "--config",
            str(config),
            "--out",
            str(fin_out),
            "--checkpoint",
            str(pre_out / "checkpoint.bin"),
            "--strategy",
            "min_max",
            "--method",
            "semi_online",
            "--pool-window",
            "4",
            "--margin",
            "0.2",
            "--lr",
            "0.001",
            "--iterations",
            "60",
        ]
    )
    assert code == 0
    assert (fin_out / "report.csv").exists()
    summary = json.loads((fin_out / "summary.json").read_text())
    assert summary["metrics"]["method"] == "semi_online"
    assert summary["config"]["train"]["pool_window"] == 4


def test_mine_subcommand_matches_library(tmp_path):
    rng = np.random.default_rng(3)
    vectors = rng.standard_normal((12, 5))
    labels = np.repeat(np.arange(4), 3)
    ds = LabeledDataset(vectors, labels, [f"p{i}" for i in range(4)])
    features_csv = tmp_path / "features.csv"
    save_dataset_csv(ds, features_csv)
    out_csv = tmp_path / "triplets.csv"
    code = cli.main(
        [
            "mine",
            "--features",
            str(features_csv),
            "--strategy",
            "all",
            "--margin",
            "0.3",
            "--out",
            str(out_csv),
        ]
    )
    assert code == 0
    with out_csv.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["anchor", "positive", "negative"]
    got = [tuple(int(v) for v in row) for row in rows[1:]]
    M = pairwise_squared_distances(l2_normalize(vectors))
    expected = mine(M, labels, MiningConfig(Strategy.ALL, 0.3))
    assert got == [tuple(t) for t in expected.tolist()]


def test_eval_subcommand(tmp_path, capsys):
    config = write_config(tmp_path)
    pre_out = tmp_path / "pre"
    assert cli.main(["pretrain", "--config", str(config), "--out", str(pre_out)]) == 0
    code = cli.main(
        [
            "eval",
            "--config",
            str(config),
            "--checkpoint",
            str(pre_out / "checkpoint.bin"),
            "--out",
            str(tmp_path / "ev"),
        ]
    )
    assert code == 0
    assert "verification_accuracy" in capsys.readouterr().out
    assert (tmp_path / "ev" / "eval.json").exists()


def test_bench_strategy_sweep_row_count(tmp_path):
    config = write_config(tmp_path, name="bench.json")
    data = json.loads(config.read_text())
    data["train"]["iterations"] = 15
    config.write_text(json.dumps(data))
    out = tmp_path / "bench"
    code = cli.main(
        [
            "bench",
            "--config",
            str(config),
            "--out",
            str(out),
            "--sweep",
            "strategies",
            "--strategies",
            "all,min_max",
            "--seeds",
            "0,1,2",
        ]
    )
    assert code == 0
    with (out / "bench.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1 + 6  # header + 2 strategies x 3 seeds


def test_bench_empty_sweep_is_usage_error(tmp_path, capsys):
    config = write_config(tmp_path)
    code = cli.main(
        ["bench", "--config", str(config), "--sweep", "strategies", "--strategies", "", "--seeds", "0"]
    )
    assert code == 2


def test_missing_checkpoint_for_finetune_flag(tmp_path, capsys):
    config = write_config(tmp_path)
    code = cli.main(
        [
            "finetune",
            "--config",
            str(config),
            "--checkpoint",
            str(tmp_path / "ghost.bin"),
        ]
    )
    assert code == 2
    assert "ghost.bin" in capsys.readouterr().err
