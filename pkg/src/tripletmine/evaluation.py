"""Synthetic labeled data and pair-verification evaluation.

The synthetic corpus stands in for a large face dataset at desk scale:
Gaussian identity clusters, optionally pushed through a fixed random smooth
warp so the class structure is not linearly separable in the ambient
space. Verification mirrors the usual pair protocol: balanced same/different
pairs, squared embedding distances, per-fold threshold chosen on the other
folds, mean held-out accuracy.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import EmbedderParams, embed_forward
from .sampler import LabeledDataset
from .seeding import DATA, derive_rng


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian identity clusters with optional fixed nonlinear warp.

    Identity centers live in a low-dimensional subspace (identity_dim of
    the ambient dim); within-cluster noise is dominated by a structured
    nuisance component spanning an independently drawn subspace plus a
    small isotropic floor. The two subspaces are generically oblique, so
    nuisance leaks into identity directions and raw distances are
    nuisance-dominated: same-identity pairs are no closer than
    different-identity ones, which is what makes a learned embedding
    necessary rather than decorative. The warp mixes everything through a
    fixed random smooth map so the identity signal is not linearly
    recoverable.
    """

    identities: int = 30
    samples_per_identity: int = 100
    dim: int = 32
    separation: float = 0.55
    noise: float = 0.7
    warp: float = 1.5  # 0 disables the warp
    identity_dim: int | None = None  # default: dim // 4, at least 1
    noise_floor: float = 0.1  # isotropic noise, as a fraction of `noise`
    seed: int = 0

    def __post_init__(self):
        if self.identities < 1 or self.samples_per_identity < 1 or self.dim < 1:
            raise ConfigError("identities, samples_per_identity and dim must be positive")
        if self.separation <= 0 or self.noise <= 0:
            raise ConfigError("separation and noise must be positive")
        if self.warp < 0:
            raise ConfigError("warp strength cannot be negative")
        if self.identity_dim is not None and not 1 <= self.identity_dim <= self.dim:
            raise ConfigError(f"identity_dim must lie in [1, {self.dim}]")
        if self.noise_floor <= 0:
            raise ConfigError("noise_floor must be positive")

    @property
    def code_dim(self) -> int:
        return self.identity_dim if self.identity_dim is not None else max(1, self.dim // 4)


def generate_synthetic(spec: SyntheticSpec) -> LabeledDataset:
    """Sample the clusters described by `spec`; deterministic given its seed.

    Draw order is subspaces, centers, warp map, then unit noise, so
    changing the noise scale or warp strength never reshuffles the other
    draws (noise scales a fixed set of unit deviations).
    """
    rng = derive_rng(spec.seed, DATA)
    n, k = spec.dim, spec.code_dim
    id_basis = np.linalg.qr(rng.standard_normal((n, k)))[0]
    nuisance_basis = np.linalg.qr(rng.standard_normal((n, n)))[0][:, k:]
    codes = spec.separation * rng.standard_normal((spec.identities, k))
    w_in = rng.standard_normal((n, n)) / np.sqrt(n)
    w_out = rng.standard_normal((n, n)) / np.sqrt(n)
    nuisance = rng.standard_normal((spec.identities, spec.samples_per_identity, n - k))
    iso = rng.standard_normal((spec.identities, spec.samples_per_identity, n))
    samples = (
        (codes @ id_basis.T)[:, None, :]
        + spec.noise * (nuisance @ nuisance_basis.T)
        + spec.noise_floor * spec.noise * iso
    ).reshape(-1, n)
    if spec.warp > 0:
        samples = samples + spec.warp * np.tanh(samples @ w_in) @ w_out
    labels = np.repeat(np.arange(spec.identities), spec.samples_per_identity)
    names = [f"id_{i:04d}" for i in range(spec.identities)]
    return LabeledDataset(samples, labels, names)


def split_by_identity(dataset: LabeledDataset, eval_identities: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Split off the last `eval_identities` dense ids as a held-out dataset.

    Both halves come back with re-densified labels; the eval half shares no
    identity (hence no sample) with the train half.
    """
    total = dataset.num_identities
    if not 0 < eval_identities < total:
        raise ConfigError(
            f"eval_identities must be in (0, {total}), got {eval_identities}"
        )
    cut = total - eval_identities
    train_mask = dataset.labels < cut
    train = LabeledDataset(
        dataset.vectors[train_mask], dataset.labels[train_mask], dataset.label_names[:cut]
    )
    eval_mask = ~train_mask
    eval_ds = LabeledDataset(
        dataset.vectors[eval_mask], dataset.labels[eval_mask] - cut, dataset.label_names[cut:]
    )
    return train, eval_ds


@dataclass
class PairProtocol:
    """Balanced same/different sample-id pairs plus the fold count."""

    id_a: np.ndarray
    id_b: np.ndarray
    same: np.ndarray
    folds: int = 10

    def __post_init__(self):
        self.id_a = np.asarray(self.id_a, dtype=np.int64)
        self.id_b = np.asarray(self.id_b, dtype=np.int64)
        self.same = np.asarray(self.same, dtype=bool)
        if not (len(self.id_a) == len(self.id_b) == len(self.same)):
            raise ValueError("protocol columns must have equal length")
        if len(self.same) == 0:
            raise ValueError("protocol is empty")
        n_same = int(self.same.sum())
        if 2 * n_same != len(self.same):
            raise ValueError(
                f"protocol is unbalanced: {n_same} same vs {len(self.same) - n_same} different"
            )
        if self.folds < 2:
            raise ValueError(f"need at least 2 folds, got {self.folds}")

    def __len__(self) -> int:
        return len(self.same)


def make_pair_protocol(
    dataset: LabeledDataset, pairs_per_class: int, folds: int = 10, seed: int = 0
) -> PairProtocol:
    """Draw `pairs_per_class` same and different pairs without duplicates."""
    if dataset.num_identities < 2:
        raise ConfigError("pair protocol needs at least 2 identities")
    if pairs_per_class < folds or pairs_per_class % folds:
        raise ConfigError(
            f"pairs_per_class ({pairs_per_class}) must be a positive multiple of folds ({folds})"
        )
    rng = derive_rng(seed)
    identities = sorted(dataset.identity_index)
    multi = [i for i in identities if len(dataset.identity_index[i]) >= 2]
    if not multi:
        raise ConfigError("no identity has 2+ samples; cannot build same pairs")
    seen: set[tuple[int, int]] = set()
    pairs: list[tuple[int, int, bool]] = []
    for want_same in (True, False):
        need = pairs_per_class
        while need:
            if want_same:
                identity = multi[int(rng.integers(len(multi)))]
                a, b = rng.choice(dataset.identity_index[identity], size=2, replace=False)
            else:
                pa, pb = rng.choice(len(identities), size=2, replace=False)
                a = rng.choice(dataset.identity_index[identities[int(pa)]])
                b = rng.choice(dataset.identity_index[identities[int(pb)]])
            key = (min(int(a), int(b)), max(int(a), int(b)))
            if key in seen:
                continue
            seen.add(key)
            pairs.append((int(a), int(b), want_same))
            need -= 1
    arr = np.array([(a, b) for a, b, _ in pairs], dtype=np.int64)
    same = np.array([s for _, _, s in pairs], dtype=bool)
    return PairProtocol(arr[:, 0], arr[:, 1], same, folds)


def save_protocol_csv(protocol: PairProtocol, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id_a", "id_b", "same"])
        for a, b, s in zip(protocol.id_a, protocol.id_b, protocol.same):
            writer.writerow([int(a), int(b), int(s)])


def load_protocol_csv(path: str | Path, folds: int = 10) -> PairProtocol:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["id_a", "id_b", "same"]:
            raise ConfigError(f"protocol file {path} must start with header 'id_a,id_b,same'")
        rows = [(int(r[0]), int(r[1]), bool(int(r[2]))) for r in reader if r]
    if not rows:
        raise ConfigError(f"protocol file {path} has no pairs")
    arr = np.array([(a, b) for a, b, _ in rows], dtype=np.int64)
    return PairProtocol(arr[:, 0], arr[:, 1], np.array([s for _, _, s in rows]), folds)


def distance_fold_accuracy(distances: np.ndarray, same: np.ndarray, folds: int) -> float:
    """Mean held-out fold accuracy with per-fold exact threshold search.

    For each fold, the threshold (predict "same" when distance < t) is the
    candidate maximizing accuracy on the remaining folds; candidates are
    the midpoints of the sorted distinct train distances plus one sentinel
    on each side. Folds are taken positionally; callers wanting order
    independence canonicalize first (see verification_accuracy).
    """
    distances = np.asarray(distances, dtype=np.float64)
    same = np.asarray(same, dtype=bool)
    same_idx = np.flatnonzero(same)
    diff_idx = np.flatnonzero(~same)
    if len(same_idx) != len(diff_idx) or len(same_idx) == 0:
        raise ValueError("need a balanced, non-empty pair set")
    if folds < 2 or folds > len(same_idx):
        raise ValueError(f"folds must lie in [2, {len(same_idx)}], got {folds}")
    same_folds = np.array_split(same_idx, folds)
    diff_folds = np.array_split(diff_idx, folds)
    accuracies = []
    for f in range(folds):
        held = np.concatenate([same_folds[f], diff_folds[f]])
        train = np.setdiff1d(np.arange(len(same)), held)
        d_train = distances[train]
        uniq = np.unique(d_train)
        candidates = np.concatenate([[uniq[0] - 1.0], (uniq[:-1] + uniq[1:]) / 2.0, [uniq[-1] + 1.0]])
        pred = d_train[None, :] < candidates[:, None]
        train_acc = (pred == same[train][None, :]).mean(axis=1)
        threshold = candidates[int(np.argmax(train_acc))]
        accuracies.append(float(((distances[held] < threshold) == same[held]).mean()))
    return float(np.mean(accuracies))


def verification_accuracy(
    params: EmbedderParams, protocol: PairProtocol, dataset: LabeledDataset
) -> float:
    """Embed the protocol's pairs and score them with distance_fold_accuracy.

    Pairs are canonicalized (sorted by class, then ids) before folding, so
    the result is invariant under any permutation of the protocol rows.
    """
    if protocol.id_a.max(initial=-1) >= len(dataset) or protocol.id_b.max(initial=-1) >= len(dataset):
        raise ValueError("protocol references sample ids outside the dataset")
    order = np.lexsort((protocol.id_b, protocol.id_a, protocol.same))
    id_a, id_b, same = protocol.id_a[order], protocol.id_b[order], protocol.same[order]
    used = np.unique(np.concatenate([id_a, id_b]))
    features, _ = embed_forward(params, dataset.vectors[used])
    row = np.searchsorted(used, np.stack([id_a, id_b]))
    distances = np.sum((features[row[0]] - features[row[1]]) ** 2, axis=1)
    return distance_fold_accuracy(distances, same, protocol.folds)
