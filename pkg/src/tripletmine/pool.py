"""Feature pools for the three mining methods.

Online mining works on the current batch (a window of one), offline mining
on the whole dataset, and semi-online mining on a rolling FIFO pool of the
last W batches. Pools store embeddings that may be up to W iterations
stale; mining returns dataset sample ids so the trainer can re-embed the
selected triplets with current parameters before the loss step.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import NORM_ATOL, pairwise_squared_distances
from .mining import MiningConfig, mine
from .model import EmbedderParams, embed_forward
from .sampler import LabeledDataset

_EMPTY = np.empty((0, 3), dtype=np.int64)


@dataclass
class _PooledBatch:
    iteration: int
    features: np.ndarray
    labels: np.ndarray
    sample_ids: np.ndarray


class FeaturePool:
    """FIFO pool holding the feature batches of the last `window` iterations."""

    def __init__(self, window: int):
        if window < 1:
            raise ValueError(f"pool window must be >= 1, got {window}")
        self.window = window
        self._batches: deque[_PooledBatch] = deque()

    def __len__(self) -> int:
        return sum(b.features.shape[0] for b in self._batches)

    @property
    def batches(self) -> int:
        return len(self._batches)

    def push(
        self,
        features: np.ndarray,
        labels: np.ndarray,
        sample_ids: np.ndarray,
        iteration: int,
    ) -> None:
        """Append one embedded batch and evict batches older than the window.

        Features must be L2-normalized already (they come out of the
        embedder normalized; distances over the pool assume it).
        """
        features = np.asarray(features, dtype=np.float64)
        norms = np.linalg.norm(features, axis=1)
        if features.size and np.abs(norms - 1.0).max() > NORM_ATOL:
            raise ValueError("pooled features must be L2-normalized")
        self._batches.append(
            _PooledBatch(
                iteration,
                features,
                np.asarray(labels, dtype=np.int64),
                np.asarray(sample_ids, dtype=np.int64),
            )
        )
        while self._batches and self._batches[0].iteration <= iteration - self.window:
            self._batches.popleft()

    def snapshot(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stacked (features, labels, sample_ids) in insertion order."""
        if not self._batches:
            raise ValueError("feature pool is empty")
        return (
            np.concatenate([b.features for b in self._batches]),
            np.concatenate([b.labels for b in self._batches]),
            np.concatenate([b.sample_ids for b in self._batches]),
        )


def pool_mine(pool: FeaturePool, cfg: MiningConfig, seed: int | None = None) -> np.ndarray:
    """Mine the configured strategy over the whole pool; returns sample-id triplets.

    A pool holding fewer than two identities has no valid triplet and
    yields an empty result.
    """
    features, labels, sample_ids = pool.snapshot()
    if len(np.unique(labels)) < 2:
        return _EMPTY
    rows = mine(pairwise_squared_distances(features), labels, cfg, seed=seed)
    return sample_ids[rows]


def offline_mine(
    dataset: LabeledDataset,
    params: EmbedderParams,
    cfg: MiningConfig,
    seed: int | None = None,
) -> np.ndarray:
    """Embed the entire dataset with current params and mine it once.

    Returns dataset sample-id triplets for consumption across subsequent
    iterations. Deterministic given params and seed.
    """
    if len(dataset) == 0 or dataset.num_identities < 2:
        return _EMPTY
    features, _ = embed_forward(params, dataset.vectors)
    return mine(pairwise_squared_distances(features), dataset.labels, cfg, seed=seed)
