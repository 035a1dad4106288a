"""Labeled datasets and P x K batch construction.

A batch holds P identities with K samples each (B = P * K rows), which
guarantees every batch contains valid triplets as long as P >= 2 and
K >= 2.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class LabeledDataset:
    """Vectors with dense identity labels plus a per-identity row index.

    `labels` are dense ids in [0, num_identities); `label_names[i]` is the
    original (string) label for dense id i.
    """

    vectors: np.ndarray
    labels: np.ndarray
    label_names: list[str]
    identity_index: dict[int, np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {self.vectors.shape}")
        if self.labels.shape != (self.vectors.shape[0],):
            raise ValueError("labels length must equal vector row count")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= len(self.label_names)):
            raise ValueError("labels must be dense ids into label_names")
        self.identity_index = {
            int(lab): np.flatnonzero(self.labels == lab) for lab in np.unique(self.labels)
        }

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def num_identities(self) -> int:
        return len(self.identity_index)


def load_dataset_csv(path: str | Path) -> LabeledDataset:
    """Read `label,x_0,...,x_{n-1}` rows; the header row is required.

    Labels are arbitrary strings interned to dense ids in first-appearance
    order.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"dataset file {path} is empty") from None
        if not header or header[0].strip() != "label":
            raise ConfigError(
                f"dataset file {path} must start with a header row 'label,x_0,...'"
            )
        names: list[str] = []
        ids: dict[str, int] = {}
        labels: list[int] = []
        rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            name = row[0]
            if name not in ids:
                ids[name] = len(names)
                names.append(name)
            labels.append(ids[name])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ConfigError(f"{path}:{line_no}: non-numeric feature value") from exc
    if not rows:
        raise ConfigError(f"dataset file {path} has no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ConfigError(f"dataset file {path} has inconsistent row widths {sorted(widths)}")
    return LabeledDataset(np.array(rows, dtype=np.float64), np.array(labels), names)


def save_dataset_csv(dataset: LabeledDataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"x_{i}" for i in range(dataset.dim)])
        for lab, vec in zip(dataset.labels, dataset.vectors):
            writer.writerow([dataset.label_names[lab]] + [repr(float(v)) for v in vec])


@dataclass(frozen=True)
class PKConfig:
    """P identities per batch, K samples per identity, B = P * K."""

    P: int
    K: int

    def __post_init__(self):
        if self.P < 2 or self.K < 2:
            raise ConfigError(f"need P >= 2 and K >= 2 for valid triplets, got P={self.P} K={self.K}")

    @property
    def batch_size(self) -> int:
        return self.P * self.K


@dataclass(frozen=True)
class PKBatch:
    """One sampled batch: (P*K, n) inputs, dense labels, dataset row ids."""

    vectors: np.ndarray
    labels: np.ndarray
    sample_ids: np.ndarray


def sample_pk_batch(dataset: LabeledDataset, cfg: PKConfig, rng: np.random.Generator) -> PKBatch:
    """Draw P identities uniformly without replacement, then K samples each.

    Within an identity, sampling is without replacement when the identity
    has at least K samples and with replacement otherwise (logged as a
    warning). Rows come out grouped by identity. Deterministic given the
    generator state.
    """
    identities = sorted(dataset.identity_index)
    if len(identities) < cfg.P:
        raise ConfigError(
            f"dataset has {len(identities)} identities but P={cfg.P} are required per batch"
        )
    chosen = rng.choice(len(identities), size=cfg.P, replace=False)
    ids: list[np.ndarray] = []
    short: list[str] = []
    for pos in chosen:
        identity = identities[int(pos)]
        pool = dataset.identity_index[identity]
        if len(pool) >= cfg.K:
            picked = rng.choice(pool, size=cfg.K, replace=False)
        else:
            picked = rng.choice(pool, size=cfg.K, replace=True)
            short.append(dataset.label_names[identity])
        ids.append(picked)
    if short:
        logger.warning(
            "identities %s have fewer than K=%d samples; sampled with replacement",
            short,
            cfg.K,
        )
    sample_ids = np.concatenate(ids)
    return PKBatch(dataset.vectors[sample_ids], dataset.labels[sample_ids], sample_ids)
