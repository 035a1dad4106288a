"""Shared numeric primitives: L2 normalization and squared-distance matrices.

All feature math is float64. Distances are squared Euclidean throughout;
no square root is ever taken, so for unit-norm rows every entry lies in
[0, 4] and equals 2 - 2 * cos(a, b).
"""
from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ZeroNormRowError

#: Tolerance for "row norms are 1" checks.
NORM_ATOL = 1e-6
#: Tolerance for distance-matrix symmetry / diagonal checks.
SYM_ATOL = 1e-9


def as_feature_matrix(features: np.ndarray) -> np.ndarray:
    """Validate and return a finite 2-D float64 feature matrix."""
    out = np.asarray(features, dtype=np.float64)
    if out.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError("feature matrix contains non-finite entries")
    return out


def l2_normalize(features: np.ndarray) -> np.ndarray:
    """Scale every row to unit Euclidean norm.

    Raises ZeroNormRowError naming the first offending row if any row has
    zero norm.
    """
    mat = as_feature_matrix(features)
    norms = np.linalg.norm(mat, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroNormRowError(int(zero[0]))
    return mat / norms[:, None]


def pairwise_squared_distances(features: np.ndarray) -> np.ndarray:
    """B x B matrix of squared Euclidean distances between rows.

    Computed pairwise from row differences, which keeps the result exactly
    symmetric with an exactly zero diagonal and no negative entries.
    """
    mat = as_feature_matrix(features)
    return cdist(mat, mat, "sqeuclidean")


def check_distance_matrix(matrix: np.ndarray, unit_norm: bool = False) -> None:
    """Assert the distance-matrix invariants; used by tests and the pool."""
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"distance matrix must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("distance matrix contains non-finite entries")
    if np.abs(m - m.T).max(initial=0.0) > SYM_ATOL:
        raise ValueError("distance matrix is not symmetric")
    if np.abs(np.diagonal(m)).max(initial=0.0) > SYM_ATOL:
        raise ValueError("distance matrix diagonal is not zero")
    if m.min(initial=0.0) < 0.0:
        raise ValueError("distance matrix has negative entries")
    if unit_norm and m.max(initial=0.0) > 4.0 + SYM_ATOL:
        raise ValueError("distance exceeds 4 for unit-norm features")
