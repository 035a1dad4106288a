"""Seed fan-out and counter-based random choice.

Every stochastic component draws from a generator derived from one master
seed plus a named domain, so components can be varied independently and
any run is reproducible from its config alone.
"""
from __future__ import annotations

import numpy as np

# Domain tags for sub-seed derivation. Keep values stable: they are part of
# the reproducibility contract of saved configs.
DATA = 0
INIT = 1
SAMPLER = 2
MINING = 3
PROTOCOL = 4

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def derive_rng(seed: int, *path: int) -> np.random.Generator:
    """Generator keyed by (seed, *path); identical keys give identical streams."""
    return np.random.default_rng(np.random.SeedSequence([seed & _MASK64, *[p & _MASK64 for p in path]]))


def _mix64(x: int) -> int:
    # SplitMix64 finalizer.
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_int(seed: int, *path: int) -> int:
    """Deterministic 64-bit key from (seed, *path); used to key mining draws."""
    h = _mix64(seed + _GOLDEN)
    for p in path:
        h = _mix64(h ^ (p + _GOLDEN))
    return h


def pair_choice(seed: int, anchor: int, positive: int, n: int) -> int:
    """Uniform index in [0, n) keyed by (seed, anchor, positive).

    Counter-based: no sequential RNG state, so draws for different
    (anchor, positive) pairs are order-independent and safe to evaluate in
    parallel. Modulo bias is ~n/2**64 and irrelevant at batch scale.
    """
    if n <= 0:
        raise ValueError("cannot choose from an empty set")
    h = _mix64(seed + _GOLDEN)
    h = _mix64(h ^ (anchor + _GOLDEN))
    h = _mix64(h ^ (positive + _GOLDEN))
    return h % n
