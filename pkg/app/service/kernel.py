"""Spatial, temporal and composite covariance functions over finite point sets."""
import math
from typing import Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from app.exceptions import InvalidInputError, InvalidSpecError
from app.models.kernelSpec import (CompositeKernelSpec, SpatialFamily,
                                   SpatialKernelSpec, TemporalKernelSpec)

_SQRT3 = math.sqrt(3.0)
_SQRT5 = math.sqrt(5.0)


def _as_matrix(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("kernel inputs must be finite")
    return arr


def spatial_gram(spec: SpatialKernelSpec, X, X2=None) -> np.ndarray:
    """Spatial covariance matrix between the rows of X and X2 (X2 defaults to X)"""
    A = _as_matrix(X)
    B = A if X2 is None else _as_matrix(X2)
    if spec.family is SpatialFamily.INDEPENDENT:
        same = cdist(A, B, metric="chebyshev") == 0.0
        return spec.amplitude * same.astype(float)

    r = cdist(A, B, metric="euclidean") / spec.lengthscale
    if spec.family is SpatialFamily.SQUARED_EXPONENTIAL:
        K = np.exp(-0.5 * r ** 2)
    elif spec.family is SpatialFamily.MATERN32:
        K = (1.0 + _SQRT3 * r) * np.exp(-_SQRT3 * r)
    elif spec.family is SpatialFamily.MATERN52:
        K = (1.0 + _SQRT5 * r + 5.0 / 3.0 * r ** 2) * np.exp(-_SQRT5 * r)
    else:  # pragma: no cover - enum is closed
        raise InvalidSpecError(f"unknown spatial family {spec.family}")
    K = spec.amplitude * K
    if X2 is None:
        # cdist is symmetric up to rounding; make the Gram exactly symmetric
        K = 0.5 * (K + K.T)
    return K


def temporal_gram(spec: TemporalKernelSpec, rounds, rounds2=None) -> np.ndarray:
    t1 = np.asarray(rounds, dtype=float).reshape(-1)
    t2 = t1 if rounds2 is None else np.asarray(rounds2, dtype=float).reshape(-1)
    if not (np.all(np.isfinite(t1)) and np.all(np.isfinite(t2))):
        raise InvalidInputError("rounds must be finite")
    gap = np.abs(t1[:, None] - t2[None, :])
    return (1.0 - spec.epsilon) ** (gap / 2.0)


def eval_spatial(spec: SpatialKernelSpec, x, x2) -> float:
    return float(spatial_gram(spec, [np.atleast_1d(x)], [np.atleast_1d(x2)])[0, 0])


def eval_temporal(spec: TemporalKernelSpec, t: int, t2: int) -> float:
    if not (0.0 <= spec.epsilon <= 1.0):
        raise InvalidSpecError(f"epsilon must lie in [0, 1], got {spec.epsilon}")
    if t < 1 or t2 < 1:
        raise InvalidInputError(f"rounds start at 1, got ({t}, {t2})")
    return (1.0 - spec.epsilon) ** (abs(t - t2) / 2.0)


def gram(spec: CompositeKernelSpec, points: Sequence[Tuple[object, int]]) -> np.ndarray:
    """Composite space-time Gram over (point, round) pairs.

    The result is the elementwise product of the spatial and the temporal Gram.
    """
    if len(points) == 0:
        raise InvalidInputError("gram needs at least one (point, round) pair")
    X = np.array([np.atleast_1d(np.asarray(p, dtype=float)) for p, _ in points])
    rounds = [r for _, r in points]
    return spatial_gram(spec.spatial, X) * temporal_gram(spec.temporal, rounds)
