"""Training schedules: softmax pretraining and triplet finetuning.

Finetuning supports the three mining methods. Online mines the current
batch; semi-online pushes each batch's embeddings into a rolling FIFO pool
of the last `pool_window` batches and re-mines the pool once per window,
consuming the selected triplets in per-iteration chunks in between;
offline re-mines the full dataset every `offline_refresh` iterations and
consumes its triplets the same way. Whatever the method, the loss step
always re-embeds the selected samples with the current parameters, so
gradients never flow through stale pooled features.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .core import pairwise_squared_distances
from .errors import ConfigError
from .evaluation import PairProtocol, verification_accuracy
from .mining import MiningConfig, active_valid_counts, mine
from .pool import FeaturePool
from .model import (
    AdagradState,
    EmbedderParams,
    SoftmaxHead,
    TripletLossResult,
    adagrad_step,
    embed_backward,
    embed_forward,
    save_checkpoint,
    softmax_xent_forward_backward,
    triplet_loss,
    triplet_loss_backward,
)
from .sampler import LabeledDataset, PKConfig, sample_pk_batch
from .seeding import INIT, MINING, SAMPLER, derive_int, derive_rng

logger = logging.getLogger(__name__)

#: Warn after this many consecutive iterations without an active triplet.
ZERO_ACTIVE_WARN_STREAK = 100


class Phase(str, Enum):
    PRETRAIN = "pretrain"
    FINETUNE = "finetune"


class MiningMethod(str, Enum):
    ONLINE = "online"
    OFFLINE = "offline"
    SEMI_ONLINE = "semi_online"


@dataclass
class TrainConfig:
    phase: Phase
    iterations: int
    pk: PKConfig
    mining: MiningConfig
    method: MiningMethod = MiningMethod.ONLINE
    pool_window: int = 10
    offline_refresh: int = 50
    learning_rate: float = 0.001
    eval_interval: int = 500
    hidden_sizes: tuple[int, ...] = (64, 64)
    embed_dim: int = 32
    seed: int = 0
    from_scratch: bool = False

    def __post_init__(self):
        if self.iterations <= 0:
            raise ConfigError(f"iterations must be positive, got {self.iterations}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.eval_interval <= 0:
            raise ConfigError(f"eval_interval must be positive, got {self.eval_interval}")
        if self.pool_window < 1:
            raise ConfigError(f"pool_window must be >= 1, got {self.pool_window}")
        if self.offline_refresh < 1:
            raise ConfigError(f"offline_refresh must be >= 1, got {self.offline_refresh}")


@dataclass(frozen=True)
class TrainRecord:
    iteration: int
    loss: float
    active_fraction: float
    verif_accuracy: float


@dataclass
class TrainReport:
    """Per-interval metric records plus a final summary."""

    records: list[TrainRecord] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("iteration,loss,active_fraction,verif_acc\n")
            for r in self.records:
                fh.write(f"{r.iteration},{r.loss!r},{r.active_fraction!r},{r.verif_accuracy!r}\n")


@dataclass
class EvalContext:
    """Held-out verification data evaluated at every report interval."""

    protocol: PairProtocol
    dataset: LabeledDataset


class _IntervalTracker:
    """Accumulates per-iteration metrics and emits records at interval ends."""

    def __init__(self, interval: int, total: int):
        self.interval = interval
        self.total = total
        self._loss = 0.0
        self._active = 0.0
        self._count = 0

    def add(self, loss: float, active_fraction: float) -> None:
        self._loss += loss
        self._active += active_fraction
        self._count += 1

    def flush(self, iteration: int, evaluate) -> TrainRecord | None:
        if iteration % self.interval and iteration != self.total:
            return None
        n = max(self._count, 1)
        record = TrainRecord(iteration, self._loss / n, self._active / n, evaluate())
        self._loss = self._active = 0.0
        self._count = 0
        return record


def _interleave(grad_w: list[np.ndarray], grad_b: list[np.ndarray]) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for w, b in zip(grad_w, grad_b):
        out.append(w)
        out.append(b)
    return out


def _make_eval(params: EmbedderParams, eval_ctx: EvalContext | None):
    if eval_ctx is None:
        return lambda: float("nan")
    return lambda: verification_accuracy(params, eval_ctx.protocol, eval_ctx.dataset)


def pretrain(
    dataset: LabeledDataset,
    cfg: TrainConfig,
    eval_ctx: EvalContext | None = None,
    checkpoint_out=None,
) -> tuple[EmbedderParams, SoftmaxHead, TrainReport]:
    """Train embedder plus softmax head with mini-batch cross-entropy."""
    if cfg.phase is not Phase.PRETRAIN:
        raise ConfigError(f"pretrain() requires phase=pretrain, got {cfg.phase.value}")
    if dataset.num_identities < 2:
        raise ConfigError("softmax pretraining needs at least 2 identities")
    rng_init = derive_rng(cfg.seed, INIT)
    params = EmbedderParams.initialize((dataset.dim, *cfg.hidden_sizes, cfg.embed_dim), rng_init)
    head = SoftmaxHead.initialize(cfg.embed_dim, dataset.num_identities, rng_init)
    opt = AdagradState.for_arrays(params.arrays() + head.arrays(), cfg.learning_rate)
    rng_sampler = derive_rng(cfg.seed, SAMPLER)
    tracker = _IntervalTracker(cfg.eval_interval, cfg.iterations)
    report = TrainReport()
    for it in range(1, cfg.iterations + 1):
        batch = sample_pk_batch(dataset, cfg.pk, rng_sampler)
        features, cache = embed_forward(params, batch.vectors)
        loss, g_feat, g_w, g_b = softmax_xent_forward_backward(head, features, batch.labels)
        grad_w, grad_b = embed_backward(params, cache, g_feat)
        adagrad_step(opt, params.arrays() + head.arrays(), _interleave(grad_w, grad_b) + [g_w, g_b])
        active, valid = active_valid_counts(
            pairwise_squared_distances(features), batch.labels, cfg.mining.margin
        )
        tracker.add(loss, active / valid if valid else 0.0)
        record = tracker.flush(it, _make_eval(params, eval_ctx))
        if record:
            report.records.append(record)
    train_features, _ = embed_forward(params, dataset.vectors)
    predicted = head.logits(train_features).argmax(axis=1)
    report.summary = {
        "phase": cfg.phase.value,
        "iterations": cfg.iterations,
        "final_loss": report.records[-1].loss,
        "final_active_fraction": report.records[-1].active_fraction,
        "verification_accuracy": report.records[-1].verif_accuracy,
        "train_accuracy": float((predicted == dataset.labels).mean()),
    }
    if checkpoint_out is not None:
        save_checkpoint(params, checkpoint_out)
    return params, head, report


def _triplet_step(
    params: EmbedderParams,
    opt: AdagradState,
    dataset: LabeledDataset,
    id_triplets: np.ndarray,
    margin: float,
) -> TripletLossResult:
    """Re-embed the triplets' samples with current params and take one step."""
    if id_triplets.shape[0] == 0:
        return TripletLossResult(0.0, np.zeros(0), 0)
    unique = np.unique(id_triplets)
    features, cache = embed_forward(params, dataset.vectors[unique])
    rows = np.searchsorted(unique, id_triplets)
    result = triplet_loss(features, rows, margin)
    grad_features = triplet_loss_backward(features, rows, margin)
    grad_w, grad_b = embed_backward(params, cache, grad_features)
    adagrad_step(opt, params.arrays(), _interleave(grad_w, grad_b))
    return result


def finetune(
    dataset: LabeledDataset,
    cfg: TrainConfig,
    initial: EmbedderParams | None = None,
    eval_ctx: EvalContext | None = None,
    checkpoint_out=None,
) -> tuple[EmbedderParams, TrainReport]:
    """Triplet-loss training with the configured strategy and mining method."""
    if cfg.phase is not Phase.FINETUNE:
        raise ConfigError(f"finetune() requires phase=finetune, got {cfg.phase.value}")
    if initial is None:
        if not cfg.from_scratch:
            raise ConfigError(
                "finetune requires a pretrained checkpoint; provide one or set from_scratch"
            )
        params = EmbedderParams.initialize(
            (dataset.dim, *cfg.hidden_sizes, cfg.embed_dim), derive_rng(cfg.seed, INIT)
        )
    else:
        params = initial.copy()
    if params.layer_sizes[0] != dataset.dim:
        raise ConfigError(
            f"embedder expects input dim {params.layer_sizes[0]} but dataset has {dataset.dim}"
        )
    opt = AdagradState.for_arrays(params.arrays(), cfg.learning_rate)
    rng_sampler = derive_rng(cfg.seed, SAMPLER)
    tracker = _IntervalTracker(cfg.eval_interval, cfg.iterations)
    report = TrainReport()

    feature_pool = FeaturePool(cfg.pool_window) if cfg.method is MiningMethod.SEMI_ONLINE else None
    queue = np.empty((0, 3), dtype=np.int64)  # pre-mined sample-id triplets
    cursor = 0
    queue_active_fraction = 0.0
    zero_streak = 0

    def consume_chunk() -> np.ndarray:
        # cycle through the queued triplets, one batch-sized chunk per step
        nonlocal cursor
        if queue.shape[0] == 0:
            return queue
        take = np.arange(cursor, cursor + cfg.pk.batch_size)
        cursor = (cursor + cfg.pk.batch_size) % queue.shape[0]
        return queue[take % queue.shape[0]]

    for it in range(1, cfg.iterations + 1):
        mining_seed = derive_int(cfg.seed, MINING, it)
        if cfg.method is MiningMethod.ONLINE:
            batch = sample_pk_batch(dataset, cfg.pk, rng_sampler)
            features, cache = embed_forward(params, batch.vectors)
            distances = pairwise_squared_distances(features)
            triplets = mine(distances, batch.labels, cfg.mining, seed=mining_seed)
            result = triplet_loss(features, triplets, cfg.mining.margin)
            grad_features = triplet_loss_backward(features, triplets, cfg.mining.margin)
            grad_w, grad_b = embed_backward(params, cache, grad_features)
            adagrad_step(opt, params.arrays(), _interleave(grad_w, grad_b))
            active, valid = active_valid_counts(distances, batch.labels, cfg.mining.margin)
            fraction = active / valid if valid else 0.0
        elif cfg.method is MiningMethod.SEMI_ONLINE:
            batch = sample_pk_batch(dataset, cfg.pk, rng_sampler)
            pooled, _ = embed_forward(params, batch.vectors)
            feature_pool.push(pooled, batch.labels, batch.sample_ids, it)
            if it == 1 or it % cfg.pool_window == 0:
                feats, labels, ids = feature_pool.snapshot()
                if len(np.unique(labels)) < 2:
                    queue = np.empty((0, 3), dtype=np.int64)
                else:
                    distances = pairwise_squared_distances(feats)
                    queue = ids[mine(distances, labels, cfg.mining, seed=mining_seed)]
                    active, valid = active_valid_counts(distances, labels, cfg.mining.margin)
                    queue_active_fraction = active / valid if valid else 0.0
                cursor = 0
            result = _triplet_step(params, opt, dataset, consume_chunk(), cfg.mining.margin)
            fraction = queue_active_fraction
        else:  # offline
            if (it - 1) % cfg.offline_refresh == 0:
                all_features, _ = embed_forward(params, dataset.vectors)
                distances = pairwise_squared_distances(all_features)
                queue = mine(distances, dataset.labels, cfg.mining, seed=mining_seed)
                cursor = 0
                active, valid = active_valid_counts(distances, dataset.labels, cfg.mining.margin)
                queue_active_fraction = active / valid if valid else 0.0
            result = _triplet_step(params, opt, dataset, consume_chunk(), cfg.mining.margin)
            fraction = queue_active_fraction

        zero_streak = zero_streak + 1 if result.active_count == 0 else 0
        if zero_streak == ZERO_ACTIVE_WARN_STREAK:
            logger.warning(
                "no active triplets for %d consecutive iterations (iteration %d); "
                "training continues with zero-loss steps",
                zero_streak,
                it,
            )
        tracker.add(result.total, fraction)
        record = tracker.flush(it, _make_eval(params, eval_ctx))
        if record:
            report.records.append(record)

    report.summary = {
        "phase": cfg.phase.value,
        "iterations": cfg.iterations,
        "strategy": cfg.mining.strategy.value,
        "method": cfg.method.value,
        "final_loss": report.records[-1].loss,
        "final_active_fraction": report.records[-1].active_fraction,
        "verification_accuracy": report.records[-1].verif_accuracy,
    }
    if checkpoint_out is not None:
        save_checkpoint(params, checkpoint_out)
    return params, report


def run_pk_sweep(
    dataset: LabeledDataset,
    base_cfg: TrainConfig,
    combos: list[tuple[int, int]],
    initial: EmbedderParams | None = None,
    eval_ctx: EvalContext | None = None,
) -> list[dict]:
    """One finetune per (P, K) combo sharing the batch size and seed protocol."""
    if not combos:
        raise ConfigError("PK sweep needs at least one (P, K) combination")
    batch = base_cfg.pk.batch_size
    for p, k in combos:
        if p * k != batch:
            raise ConfigError(f"combo ({p},{k}) has P*K={p * k}, expected batch size {batch}")
    rows = []
    for p, k in combos:
        cfg = replace(base_cfg, pk=PKConfig(p, k))
        _, report = finetune(dataset, cfg, initial, eval_ctx)
        rows.append(
            {
                "P": p,
                "K": k,
                "verif_accuracy": report.summary["verification_accuracy"],
                "final_loss": report.summary["final_loss"],
            }
        )
    return rows
