"""Brute-force reference implementations of the mining selection rules.

Written as literal nested loops, independent of the package's vectorized
kernels: persons in first-appearance order, anchors/positives in row order
within the person, negatives in global row order, argmin/argmax by
scanning and keeping the first strict extremum. Production output must
match these exactly, order included.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(x: int) -> int:
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def ref_pair_choice(seed: int, anchor: int, positive: int, n: int) -> int:
    h = _mix64(seed + _GOLDEN)
    h = _mix64(h ^ (anchor + _GOLDEN))
    h = _mix64(h ^ (positive + _GOLDEN))
    return h % n


def persons(labels) -> list[list[int]]:
    labels = list(labels)
    seen = []
    for lab in labels:
        if lab not in seen:
            seen.append(lab)
    return [[i for i, l in enumerate(labels) if l == lab] for lab in seen]


def ref_valid_triplets(labels) -> list[tuple[int, int, int]]:
    labels = list(labels)
    out = []
    for rows in persons(labels):
        for i in rows:
            for j in rows:
                if j == i:
                    continue
                for k in range(len(labels)):
                    if labels[k] != labels[i]:
                        out.append((i, j, k))
    return out


def ref_batch_all(M, labels, margin) -> list[tuple[int, int, int]]:
    return [(i, j, k) for i, j, k in ref_valid_triplets(labels) if M[i][j] + margin > M[i][k]]


def ref_batch_random(M, labels, margin, seed) -> list[tuple[int, int, int]]:
    labels = list(labels)
    out = []
    for rows in persons(labels):
        for i in rows:
            for j in rows:
                if j == i:
                    continue
                t = []
                for k in range(len(labels)):
                    if labels[k] != labels[i] and M[i][j] + margin > M[i][k]:
                        t.append((i, j, k))
                if t:
                    out.append(t[ref_pair_choice(seed, i, j, len(t))])
    return out


def _first_argmin(t, M):
    best = None
    for trip in t:
        if best is None or M[trip[0]][trip[2]] < M[best[0]][best[2]]:
            best = trip
    return best


def _first_argmax(t, M):
    best = None
    for trip in t:
        if best is None or M[trip[0]][trip[2]] > M[best[0]][best[2]]:
            best = trip
    return best


def ref_batch_min_min(M, labels, margin) -> list[tuple[int, int, int]]:
    labels = list(labels)
    out = []
    for rows in persons(labels):
        for i in rows:
            t = []
            for j in rows:
                if j == i:
                    continue
                for k in range(len(labels)):
                    if labels[k] != labels[i] and M[i][j] + margin > M[i][k]:
                        t.append((i, j, k))
            if t:
                out.append(_first_argmin(t, M))
    return out


def ref_batch_min_max(M, labels, margin) -> list[tuple[int, int, int]]:
    labels = list(labels)
    out = []
    for rows in persons(labels):
        for i in rows:
            t1 = []
            for j in rows:
                if j == i:
                    continue
                t2 = []
                for k in range(len(labels)):
                    if labels[k] != labels[i] and M[i][j] + margin > M[i][k]:
                        t2.append((i, j, k))
                if t2:
                    t1.append(_first_argmin(t2, M))
            if t1:
                out.append(_first_argmax(t1, M))
    return out


def ref_batch_hardest(M, labels, margin) -> list[tuple[int, int, int]]:
    labels = list(labels)
    out = []
    for rows in persons(labels):
        t = []
        for i in rows:
            for j in rows:
                if j == i:
                    continue
                for k in range(len(labels)):
                    if labels[k] != labels[i] and M[i][j] + margin > M[i][k]:
                        t.append((i, j, k))
        if t:
            out.append(_first_argmin(t, M))
    return out


REFERENCES = {
    "all": lambda M, labels, margin, seed: ref_batch_all(M, labels, margin),
    "random": ref_batch_random,
    "min_min": lambda M, labels, margin, seed: ref_batch_min_min(M, labels, margin),
    "min_max": lambda M, labels, margin, seed: ref_batch_min_max(M, labels, margin),
    "hardest": lambda M, labels, margin, seed: ref_batch_hardest(M, labels, margin),
}


def random_unit_batch(rng: np.random.Generator, max_p=5, max_k=4, max_d=8):
    """Random P*K batch of unit-norm features with shuffled row order."""
    p = int(rng.integers(2, max_p + 1))
    k = int(rng.integers(2, max_k + 1))
    d = int(rng.integers(2, max_d + 1))
    labels = np.repeat(np.arange(p), k)
    rng.shuffle(labels)
    feats = rng.standard_normal((p * k, d))
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    return feats, labels
