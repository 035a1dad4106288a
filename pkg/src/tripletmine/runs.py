"""Run orchestration: materialize datasets, execute phases, write artifacts.

Every run writes into its out_dir: `report.csv` (per-interval metrics),
`summary.json` (final metrics plus a full config echo), `protocol.csv`
(the verification pairs actually used) and, for training runs, a
`checkpoint.bin`. Outputs contain no timestamps, so identical configs and
seeds reproduce them byte for byte.
"""
from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig, DatasetSource, EvalSettings, SweepSpec
from .core import l2_normalize, pairwise_squared_distances
from .errors import ConfigError
from .evaluation import (
    generate_synthetic,
    load_protocol_csv,
    make_pair_protocol,
    save_protocol_csv,
    split_by_identity,
    verification_accuracy,
)
from .mining import MiningConfig, coerce_strategy, mine
from .model import load_checkpoint
from .sampler import LabeledDataset, load_dataset_csv
from .seeding import PROTOCOL, derive_int
from .trainer import EvalContext, Phase, finetune, pretrain, run_pk_sweep


def load_run_dataset(source: DatasetSource) -> LabeledDataset:
    if source.synthetic is not None:
        return generate_synthetic(source.synthetic.to_spec())
    return load_dataset_csv(source.csv_path)


def _split_and_protocol(
    dataset: LabeledDataset, settings: EvalSettings, seed: int
) -> tuple[LabeledDataset, EvalContext | None]:
    """Split off held-out identities and build/load their pair protocol."""
    if settings.eval_identities == 0:
        return dataset, None
    train_ds, eval_ds = split_by_identity(dataset, settings.eval_identities)
    if settings.protocol_csv:
        protocol = load_protocol_csv(settings.protocol_csv, settings.folds)
    else:
        protocol = make_pair_protocol(
            eval_ds, settings.pairs_per_class, settings.folds, seed=derive_int(seed, PROTOCOL)
        )
    return train_ds, EvalContext(protocol, eval_ds)


def prepare_data(config: RunConfig, out_dir: Path | None = None) -> tuple[LabeledDataset, EvalContext | None]:
    full = load_run_dataset(config.dataset)
    train_ds, eval_ctx = _split_and_protocol(full, config.eval, config.seed)
    if out_dir is not None and eval_ctx is not None:
        save_protocol_csv(eval_ctx.protocol, out_dir / "protocol.csv")
    return train_ds, eval_ctx


def _write_artifacts(config: RunConfig, report, out: Path, extra: dict[str, str]) -> dict:
    report_csv = out / "report.csv"
    report.write_csv(report_csv)
    summary_json = out / "summary.json"
    artifacts = {"report_csv": str(report_csv), "summary_json": str(summary_json), **extra}
    payload = {
        "metrics": report.summary,
        "artifacts": artifacts,
        "config": config.model_dump(mode="json"),
    }
    summary_json.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return payload


def execute_pretrain(config: RunConfig) -> dict:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_ds, eval_ctx = prepare_data(config, out)
    cfg = config.train_config(Phase.PRETRAIN)
    checkpoint = config.checkpoint_out or str(out / "checkpoint.bin")
    _, _, report = pretrain(train_ds, cfg, eval_ctx, checkpoint_out=checkpoint)
    return _write_artifacts(config, report, out, {"checkpoint": checkpoint})


def execute_finetune(config: RunConfig) -> dict:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_ds, eval_ctx = prepare_data(config, out)
    if config.from_scratch:
        initial = None
    else:
        if not config.checkpoint_in:
            raise ConfigError(
                "finetune needs a pretrained checkpoint (triplet training from a random "
                "start performs markedly worse); run pretrain and pass checkpoint_in, "
                "or set from_scratch to accept a random start"
            )
        initial = load_checkpoint(config.checkpoint_in)
    cfg = config.train_config(Phase.FINETUNE)
    checkpoint = config.checkpoint_out or str(out / "checkpoint.bin")
    _, report = finetune(train_ds, cfg, initial, eval_ctx, checkpoint_out=checkpoint)
    return _write_artifacts(config, report, out, {"checkpoint": checkpoint})


def execute_mine(
    features: np.ndarray,
    labels: list[str],
    strategy: str,
    margin: float,
    seed: int,
    normalize: bool = True,
) -> np.ndarray:
    """Mine triplets over raw feature rows (the CLI `mine` path)."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] != len(labels):
        raise ConfigError("features must be a 2-D matrix with one label per row")
    if normalize:
        feats = l2_normalize(feats)
    names: dict[str, int] = {}
    dense = np.array([names.setdefault(lab, len(names)) for lab in labels], dtype=np.int64)
    cfg = MiningConfig(coerce_strategy(strategy), margin)
    return mine(pairwise_squared_distances(feats), dense, cfg, seed=seed)


def execute_eval(
    checkpoint: str, dataset: DatasetSource, settings: EvalSettings, seed: int = 0
) -> dict:
    if not Path(checkpoint).exists():
        raise ConfigError(f"checkpoint does not exist: {checkpoint}")
    params = load_checkpoint(checkpoint)
    full = load_run_dataset(dataset)
    if settings.eval_identities:
        _, eval_ds = split_by_identity(full, settings.eval_identities)
    else:
        eval_ds = full
    if settings.protocol_csv:
        protocol = load_protocol_csv(settings.protocol_csv, settings.folds)
    else:
        protocol = make_pair_protocol(
            eval_ds, settings.pairs_per_class, settings.folds, seed=derive_int(seed, PROTOCOL)
        )
    accuracy = verification_accuracy(params, protocol, eval_ds)
    return {"accuracy": accuracy, "pairs": len(protocol)}


def execute_bench(config: RunConfig, sweep: SweepSpec) -> dict:
    """Run the sweep: per seed, one shared pretrain plus one finetune per cell.

    Emits one row per (cell, seed) into <out_dir>/bench.csv.
    """
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    full = load_run_dataset(config.dataset)
    shared_initial = load_checkpoint(config.checkpoint_in) if config.checkpoint_in else None

    rows: list[dict] = []
    for seed in sweep.seeds:
        train_ds, eval_ctx = _split_and_protocol(full, config.eval, seed)
        baseline = float("nan")
        if config.from_scratch:
            initial = None
        elif shared_initial is not None:
            initial = shared_initial
        else:
            pre_cfg = config.train_config(Phase.PRETRAIN, seed=seed)
            initial, _, pre_report = pretrain(train_ds, pre_cfg, eval_ctx)
            baseline = pre_report.summary["verification_accuracy"]

        def add_row(label, verif_acc, final_loss):
            rows.append(
                {
                    "kind": sweep.kind,
                    "cell": label,
                    "seed": seed,
                    "verif_acc": verif_acc,
                    "final_loss": final_loss,
                    "baseline_verif_acc": baseline,
                }
            )

        base_cfg = config.train_config(Phase.FINETUNE, seed=seed)
        if sweep.kind == "pk":
            for sweep_row in run_pk_sweep(train_ds, base_cfg, sweep.pk_combos, initial, eval_ctx):
                add_row(
                    f"P{sweep_row['P']}xK{sweep_row['K']}",
                    sweep_row["verif_accuracy"],
                    sweep_row["final_loss"],
                )
        else:
            cells = (
                [(s.value, replace(base_cfg, mining=MiningConfig(s, base_cfg.mining.margin)))
                 for s in sweep.strategies]
                if sweep.kind == "strategies"
                else [(m.value, replace(base_cfg, method=m)) for m in sweep.methods]
            )
            for label, cfg in cells:
                _, report = finetune(train_ds, cfg, initial, eval_ctx)
                add_row(label, report.summary["verification_accuracy"], report.summary["final_loss"])

    csv_path = out / "bench.csv"
    with csv_path.open("w", newline="") as fh:
        fh.write("kind,cell,seed,verif_acc,final_loss,baseline_verif_acc\n")
        for r in rows:
            fh.write(
                f"{r['kind']},{r['cell']},{r['seed']},{r['verif_acc']!r},"
                f"{r['final_loss']!r},{r['baseline_verif_acc']!r}\n"
            )
    return {"rows": rows, "csv_path": str(csv_path)}
