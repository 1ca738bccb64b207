"""
Deterministic reductions.

All heavy floating-point reductions in this package (momentum quadrature,
residual norms, radial quadrature) go through `pairwise_sum`, a pairwise
summation with a *fixed* tree shape: the array is folded in halves
(x[0]+x[1], x[2]+x[3], ...) until one element remains, padding odd lengths
with a zero tail.  The tree shape depends only on the array length, never
on thread count or chunking, so results are bit-identical across runs and
across any declared parallelism degree.

Pairwise summation also has O(log N) rounding-error growth, which matters
for the near-cancellation sums in the constraint residuals.
"""

from __future__ import annotations

import numpy as np


def pairwise_sum(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Sum `values` along `axis` with a fixed pairwise folding tree.

    Equivalent to np.sum up to rounding, but with a reproducible,
    length-determined association order.
    """
    a = np.asarray(values, dtype=np.float64)
    a = np.moveaxis(a, axis, -1)
    n = a.shape[-1]
    if n == 0:
        return np.zeros(a.shape[:-1])
    while a.shape[-1] > 1:
        m = a.shape[-1]
        if m % 2 == 1:
            pad = np.zeros(a.shape[:-1] + (1,), dtype=a.dtype)
            a = np.concatenate([a, pad], axis=-1)
            m += 1
        a = a[..., 0::2] + a[..., 1::2]
    return a[..., 0]


def pairwise_dot(x: np.ndarray, w: np.ndarray, axis: int = -1) -> np.ndarray:
    """Weighted reduction sum(x*w) with the fixed pairwise tree."""
    return pairwise_sum(np.asarray(x) * np.asarray(w), axis=axis)


def max_abs(values: np.ndarray) -> float:
    """Max of |values|; deterministic trivially, provided for symmetry."""
    a = np.asarray(values)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a)))


def l2_norm(values: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Root-mean-square norm with deterministic summation order."""
    a = np.asarray(values, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    sq = a * a
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64).ravel()
        total = pairwise_sum(sq * w)
        wsum = pairwise_sum(w)
        return float(np.sqrt(total / wsum))
    return float(np.sqrt(pairwise_sum(sq) / a.size))
