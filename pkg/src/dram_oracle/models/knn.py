"""Inverse-distance-weighted k-nearest-neighbour regression."""
from __future__ import annotations

import numpy as np

from .common import ModelError


def knn_predict(x_train: np.ndarray, y_train: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """Predict each query row from its ``k`` nearest rows of ``x_train`` (Euclidean).

    Ties in distance go to the lower sample index. When some neighbours sit at
    distance zero their mean is returned; otherwise weights are 1/distance.
    """
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    n = len(x_train)
    if not 1 <= k <= n:
        raise ModelError(f"k: must lie in [1, {n}], got {k}")
    out = np.empty(len(queries))
    for r, q in enumerate(queries):
        dist = np.sqrt(((x_train - q) ** 2).sum(axis=1))
        nearest = np.argsort(dist, kind="stable")[:k]
        d = dist[nearest]
        y = y_train[nearest]
        zero = d == 0.0
        if zero.any():
            out[r] = y[zero].mean()
        else:
            w = 1.0 / d
            out[r] = (w * y).sum() / w.sum()
    return out
