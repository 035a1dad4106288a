"""Declarative run configuration.

A RunConfig fully describes a run: dataset source, training settings,
evaluation protocol and output location. Configs are plain JSON, round-trip
losslessly through pydantic, and are echoed into every run summary so each
reported number is traceable to its exact configuration.

All randomness flows from RunConfig.seed, fanned out via named sub-seeds
(data/init/sampler/mining/protocol). The synthetic dataset keeps its own
seed so sweeps over run seeds compare strategies on one fixed corpus.
"""
from __future__ import annotations

from pathlib import Path
from typing import Literal

from pydantic import BaseModel, field_validator, model_validator

from .evaluation import SyntheticSpec
from .mining import MiningConfig, Strategy
from .sampler import PKConfig
from .trainer import MiningMethod, Phase, TrainConfig

# Per-phase defaults when the config leaves them unset. The triplet-phase
# learning rate follows the reference setup; the pretrain values come from
# a pilot run on the default synthetic task (see README).
FINETUNE_LEARNING_RATE = 0.001
FINETUNE_ITERATIONS = 3000
PRETRAIN_LEARNING_RATE = 0.03
PRETRAIN_ITERATIONS = 2000


def _require_exists(path: str | None, what: str) -> str | None:
    if path is not None and not Path(path).exists():
        raise ValueError(f"{what} does not exist: {path}")
    return path


class SyntheticSpecModel(BaseModel):
    identities: int = 30
    samples_per_identity: int = 100
    dim: int = 32
    separation: float = 0.55
    noise: float = 0.7
    warp: float = 1.5
    identity_dim: int | None = None
    noise_floor: float = 0.1
    seed: int = 0

    def to_spec(self) -> SyntheticSpec:
        return SyntheticSpec(**self.model_dump())


class DatasetSource(BaseModel):
    """Exactly one of `synthetic` or `csv_path`."""

    synthetic: SyntheticSpecModel | None = None
    csv_path: str | None = None

    @model_validator(mode="after")
    def _exactly_one(self) -> "DatasetSource":
        if (self.synthetic is None) == (self.csv_path is None):
            raise ValueError("dataset source needs exactly one of 'synthetic' or 'csv_path'")
        _require_exists(self.csv_path, "dataset csv")
        return self


class EvalSettings(BaseModel):
    """Held-out verification setup; eval_identities=0 disables evaluation.

    When protocol_csv is given, its pair ids index into the held-out split
    (or the whole dataset if eval_identities is 0).
    """

    eval_identities: int = 10
    pairs_per_class: int = 500
    folds: int = 10
    protocol_csv: str | None = None

    @field_validator("eval_identities", "pairs_per_class")
    @classmethod
    def _non_negative(cls, v: int) -> int:
        if v < 0:
            raise ValueError("evaluation counts cannot be negative")
        return v

    @field_validator("protocol_csv")
    @classmethod
    def _protocol_exists(cls, v: str | None) -> str | None:
        return _require_exists(v, "protocol csv")


class TrainSettings(BaseModel):
    iterations: int | None = None  # per-phase default when unset
    P: int = 8
    K: int = 3
    strategy: Strategy = Strategy.MIN_MAX
    margin: float = 0.2
    method: MiningMethod = MiningMethod.ONLINE
    pool_window: int = 10
    offline_refresh: int = 50
    learning_rate: float | None = None  # per-phase default when unset
    eval_interval: int = 500
    hidden_sizes: tuple[int, ...] = (64, 64)
    embed_dim: int = 32


class RunConfig(BaseModel):
    dataset: DatasetSource
    train: TrainSettings = TrainSettings()
    eval: EvalSettings = EvalSettings()
    seed: int = 0
    out_dir: str = "runs/out"
    checkpoint_in: str | None = None
    checkpoint_out: str | None = None  # default: <out_dir>/checkpoint.bin
    from_scratch: bool = False

    @field_validator("checkpoint_in")
    @classmethod
    def _checkpoint_exists(cls, v: str | None) -> str | None:
        return _require_exists(v, "checkpoint")

    def train_config(self, phase: Phase, seed: int | None = None) -> TrainConfig:
        """Materialize the trainer config for one phase, resolving defaults."""
        t = self.train
        if phase is Phase.PRETRAIN:
            lr = t.learning_rate if t.learning_rate is not None else PRETRAIN_LEARNING_RATE
            iterations = t.iterations if t.iterations is not None else PRETRAIN_ITERATIONS
        else:
            lr = t.learning_rate if t.learning_rate is not None else FINETUNE_LEARNING_RATE
            iterations = t.iterations if t.iterations is not None else FINETUNE_ITERATIONS
        return TrainConfig(
            phase=phase,
            iterations=iterations,
            pk=PKConfig(t.P, t.K),
            mining=MiningConfig(t.strategy, t.margin),
            method=t.method,
            pool_window=t.pool_window,
            offline_refresh=t.offline_refresh,
            learning_rate=lr,
            eval_interval=t.eval_interval,
            hidden_sizes=tuple(t.hidden_sizes),
            embed_dim=t.embed_dim,
            seed=self.seed if seed is None else seed,
            from_scratch=self.from_scratch,
        )


class SweepSpec(BaseModel):
    """What cmd_bench compares: strategies, (P, K) combos, or mining methods."""

    kind: Literal["strategies", "pk", "methods"]
    strategies: list[Strategy] = []
    pk_combos: list[tuple[int, int]] = []
    methods: list[MiningMethod] = []
    seeds: list[int] = [0]

    @model_validator(mode="after")
    def _non_empty(self) -> "SweepSpec":
        cells = {
            "strategies": self.strategies,
            "pk": self.pk_combos,
            "methods": self.methods,
        }[self.kind]
        if not cells:
            raise ValueError(f"sweep kind {self.kind!r} has an empty cell list")
        if not self.seeds:
            raise ValueError("sweep needs at least one seed")
        return self
