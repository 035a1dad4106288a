"""Triplet enumeration and the five hard-example selection strategies.

All strategies operate on a B x B squared-distance matrix M and a label
vector. A triplet (i, j, k) is *valid* when label(i) == label(j), i != j
and label(i) != label(k); it is *active* when M(i, j) + margin > M(i, k)
(strict: boundary equality carries zero loss and is skipped).

Iteration order follows the canonical nested loops: persons in first-
appearance order of the label vector, anchors in row order within the
person, positives in row order within the person, negatives in global row
order. Argmin/argmax ties are broken by that same order, which makes every
strategy deterministic and lets tests compare against a brute-force
reference exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError
from .seeding import pair_choice

_EMPTY = np.empty((0, 3), dtype=np.int64)


class Strategy(str, Enum):
    ALL = "all"
    RANDOM = "random"
    MIN_MIN = "min_min"
    MIN_MAX = "min_max"
    HARDEST = "hardest"


STRATEGY_NAMES = tuple(s.value for s in Strategy)


@dataclass(frozen=True)
class MiningConfig:
    strategy: Strategy
    margin: float = 0.2
    seed: int = 0  # used by Strategy.RANDOM only

    def __post_init__(self):
        if self.margin <= 0:
            raise ConfigError(f"margin must be positive, got {self.margin}")


def coerce_strategy(value: str | Strategy) -> Strategy:
    try:
        return Strategy(value)
    except ValueError:
        raise ConfigError(
            f"unknown strategy {value!r}; choose one of {{{','.join(STRATEGY_NAMES)}}}"
        ) from None


def person_blocks(labels: np.ndarray) -> list[np.ndarray]:
    """Row indices per person, persons ordered by first appearance."""
    labels = np.asarray(labels)
    order: list[np.ndarray] = []
    seen: set = set()
    for lab in labels:
        key = lab.item() if hasattr(lab, "item") else lab
        if key not in seen:
            seen.add(key)
            order.append(np.flatnonzero(labels == lab))
    return order


def _stack(triplets: list[np.ndarray]) -> np.ndarray:
    if not triplets:
        return _EMPTY
    return np.concatenate(triplets, axis=0)


def enumerate_valid_triplets(labels: np.ndarray) -> np.ndarray:
    """All valid (anchor, positive, negative) index triplets, (T, 3) int64."""
    labels = np.asarray(labels)
    out: list[np.ndarray] = []
    for rows in person_blocks(labels):
        negs = np.flatnonzero(labels != labels[rows[0]])
        if negs.size == 0:
            continue
        for i in rows:
            pos = rows[rows != i]
            if pos.size == 0:
                continue
            jj = np.repeat(pos, negs.size)
            kk = np.tile(negs, pos.size)
            out.append(np.stack([np.full(jj.size, i, dtype=np.int64), jj, kk], axis=1))
    return _stack(out)


def _check_inputs(M: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    M = np.asarray(M, dtype=np.float64)
    labels = np.asarray(labels)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"distance matrix must be square, got shape {M.shape}")
    if labels.shape != (M.shape[0],):
        raise ValueError("labels length must match distance matrix size")
    return M, labels


def batch_all(M: np.ndarray, labels: np.ndarray, cfg: MiningConfig) -> np.ndarray:
    """Every active valid triplet."""
    M, labels = _check_inputs(M, labels)
    out: list[np.ndarray] = []
    for rows in person_blocks(labels):
        negs = np.flatnonzero(labels != labels[rows[0]])
        if negs.size == 0:
            continue
        for i in rows:
            pos = rows[rows != i]
            if pos.size == 0:
                continue
            # active[j, k] in j-outer, k-inner order matches the nested loops
            active = M[i, negs][None, :] < (M[i, pos] + cfg.margin)[:, None]
            jj, kk = np.nonzero(active)
            if jj.size:
                out.append(
                    np.stack([np.full(jj.size, i, dtype=np.int64), pos[jj], negs[kk]], axis=1)
                )
    return _stack(out)


def batch_random(
    M: np.ndarray, labels: np.ndarray, cfg: MiningConfig, seed: int | None = None
) -> np.ndarray:
    """One uniform pick among the active negatives of each (anchor, positive).

    The pick is keyed by (seed, anchor, positive) through a counter-based
    hash, so results do not depend on evaluation order.
    """
    M, labels = _check_inputs(M, labels)
    base = cfg.seed if seed is None else seed
    out: list[tuple[int, int, int]] = []
    for rows in person_blocks(labels):
        negs = np.flatnonzero(labels != labels[rows[0]])
        if negs.size == 0:
            continue
        for i in rows:
            neg_d = M[i, negs]
            for j in rows[rows != i]:
                active = negs[neg_d < M[i, j] + cfg.margin]
                if active.size:
                    k = active[pair_choice(base, int(i), int(j), active.size)]
                    out.append((int(i), int(j), int(k)))
    if not out:
        return _EMPTY
    return np.array(out, dtype=np.int64)


def _nearest_valid_negatives(M: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per row: (index, distance) of the closest different-label row.

    Ties resolve to the lowest index. Rows with no negative get distance
    +inf and are never active.
    """
    same = labels[:, None] == labels[None, :]
    neg_d = np.where(same, np.inf, M)
    nearest = np.argmin(neg_d, axis=1)
    return nearest, neg_d[np.arange(len(labels)), nearest]


def _first_active_positive(
    M: np.ndarray, labels: np.ndarray, margin: float, nearest_dist: np.ndarray
) -> np.ndarray:
    """Per anchor: lowest-index positive admitting its nearest negative, or -1.

    A positive j admits negative k when M(i, j) + margin > M(i, k); the
    nearest negative minimizes the right side, so anchor i has any active
    triplet iff some positive admits the nearest one.
    """
    B = len(labels)
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    admits = same & (M + margin > nearest_dist[:, None])
    first = admits.argmax(axis=1)
    first[~admits.any(axis=1)] = -1
    return first


def _min_min_max(M: np.ndarray, labels: np.ndarray, cfg: MiningConfig) -> np.ndarray:
    """Shared kernel for the per-anchor min-min / min-max strategies.

    Both reduce to (anchor, first active positive, nearest valid negative):
    the closest active negative of any (anchor, positive) is the anchor's
    globally closest valid negative whenever the pair has one at all, since
    the global minimizer lies below every admitting threshold. The min-max
    outer argmax therefore ranges over copies of one value and ties back to
    the first active positive, exactly like the min-min argmin.
    """
    M, labels = _check_inputs(M, labels)
    nearest, nearest_dist = _nearest_valid_negatives(M, labels)
    first_pos = _first_active_positive(M, labels, cfg.margin, nearest_dist)
    out: list[tuple[int, int, int]] = []
    for rows in person_blocks(labels):
        for i in rows:
            if first_pos[i] >= 0:
                out.append((int(i), int(first_pos[i]), int(nearest[i])))
    if not out:
        return _EMPTY
    return np.array(out, dtype=np.int64)


def batch_min_min(M: np.ndarray, labels: np.ndarray, cfg: MiningConfig) -> np.ndarray:
    """Per anchor, the active triplet whose negative is closest to the anchor."""
    return _min_min_max(M, labels, cfg)


def batch_min_max(M: np.ndarray, labels: np.ndarray, cfg: MiningConfig) -> np.ndarray:
    """Per anchor: closest active negative per positive, then the positive
    whose chosen negative is farthest.

    Coincides with batch_min_min on every realizable input; see
    _min_min_max for why.
    """
    return _min_min_max(M, labels, cfg)


def batch_hardest(M: np.ndarray, labels: np.ndarray, cfg: MiningConfig) -> np.ndarray:
    """Per person, the single active triplet whose negative is closest."""
    M, labels = _check_inputs(M, labels)
    nearest, nearest_dist = _nearest_valid_negatives(M, labels)
    first_pos = _first_active_positive(M, labels, cfg.margin, nearest_dist)
    out: list[tuple[int, int, int]] = []
    for rows in person_blocks(labels):
        live = rows[first_pos[rows] >= 0]
        if live.size == 0:
            continue
        i = live[np.argmin(nearest_dist[live])]  # first anchor on ties
        out.append((int(i), int(first_pos[i]), int(nearest[i])))
    if not out:
        return _EMPTY
    return np.array(out, dtype=np.int64)


def mine(
    M: np.ndarray, labels: np.ndarray, cfg: MiningConfig, seed: int | None = None
) -> np.ndarray:
    """Dispatch to the configured strategy."""
    strategy = coerce_strategy(cfg.strategy)
    if strategy is Strategy.ALL:
        return batch_all(M, labels, cfg)
    if strategy is Strategy.RANDOM:
        return batch_random(M, labels, cfg, seed=seed)
    if strategy is Strategy.MIN_MIN:
        return batch_min_min(M, labels, cfg)
    if strategy is Strategy.MIN_MAX:
        return batch_min_max(M, labels, cfg)
    return batch_hardest(M, labels, cfg)


def active_valid_counts(M: np.ndarray, labels: np.ndarray, margin: float) -> tuple[int, int]:
    """(active, valid) triplet counts, computed in O(B^2 log B).

    Per anchor the active negatives of positive j are those closer than
    M(i, j) + margin, counted by binary search over the sorted negative
    distances.
    """
    M, labels = _check_inputs(M, labels)
    active = 0
    valid = 0
    for rows in person_blocks(labels):
        negs = np.flatnonzero(labels != labels[rows[0]])
        if negs.size == 0 or rows.size < 2:
            continue
        valid += rows.size * (rows.size - 1) * negs.size
        for i in rows:
            neg_sorted = np.sort(M[i, negs])
            thresholds = M[i, rows[rows != i]] + margin
            active += int(np.searchsorted(neg_sorted, thresholds, side="left").sum())
    return active, valid
