"""Random regression forest: bootstrap samples, random feature subsets, variance-reduction splits.

Each split sends ``x <= threshold`` left, where the threshold is the largest
training value on the left side. Thresholds are therefore actual training
values, and predictions are unchanged by any strictly increasing transform of
a column applied to both training and query data.

Trees are flattened into parallel arrays: ``feature`` (-1 marks a leaf),
``threshold``, ``left``, ``right`` and ``value``.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .common import EmptyDatasetError, ModelError


@njit(cache=True)
def _grow(x, y, boot, max_features, min_leaf, max_depth, seed):
    np.random.seed(seed)
    n = boot.shape[0]
    d = x.shape[1]
    yb = np.empty(n)
    for p in range(n):
        yb[p] = y[boot[p]]
    # order[f] lists bootstrap positions sorted by feature f; every node owns
    # the same contiguous slice [lo, hi) of each row
    order = np.empty((d, n), np.int64)
    col = np.empty(n)
    for f in range(d):
        for p in range(n):
            col[p] = x[boot[p], f]
        order[f] = np.argsort(col, kind="mergesort")

    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)

    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node = np.empty(cap, np.int64)
    st_lo[0] = 0
    st_hi[0] = n
    st_depth[0] = 0
    st_node[0] = 0
    top = 1
    n_nodes = 1

    goes_left = np.zeros(n, np.bool_)
    buf = np.empty(n, np.int64)
    perm = np.arange(d)

    while top > 0:
        top -= 1
        lo = st_lo[top]
        hi = st_hi[top]
        depth = st_depth[top]
        node = st_node[top]
        m = hi - lo

        s = 0.0
        ss = 0.0
        ymin = np.inf
        ymax = -np.inf
        for idx in range(lo, hi):
            v = yb[order[0, idx]]
            s += v
            ss += v * v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        value[node] = s / m
        if ymin == ymax or m < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        sse = ss - s * s / m

        for a in range(d - 1, 0, -1):
            b = np.random.randint(0, a + 1)
            t = perm[a]
            perm[a] = perm[b]
            perm[b] = t

        best_score = s * s / m
        best_f = -1
        best_idx = -1
        tried = 0
        for q in range(d):
            if tried >= max_features:
                break
            f = perm[q]
            if x[boot[order[f, lo]], f] == x[boot[order[f, hi - 1]], f]:
                continue
            tried += 1
            sl = 0.0
            for idx in range(lo, hi - 1):
                sl += yb[order[f, idx]]
                nl = idx - lo + 1
                if nl < min_leaf or m - nl < min_leaf:
                    continue
                xv = x[boot[order[f, idx]], f]
                if xv == x[boot[order[f, idx + 1]], f]:
                    continue
                sr = s - sl
                score = sl * sl / nl + sr * sr / (m - nl)
                if score > best_score:
                    best_score = score
                    best_f = f
                    best_idx = idx
        if best_f < 0 or best_score - s * s / m <= 1e-12 * sse:
            continue

        for idx in range(lo, hi):
            goes_left[order[best_f, idx]] = idx <= best_idx
        for f in range(d):
            if f == best_f:
                continue
            a = 0
            for idx in range(lo, hi):
                p = order[f, idx]
                if goes_left[p]:
                    buf[a] = p
                    a += 1
            for idx in range(lo, hi):
                p = order[f, idx]
                if not goes_left[p]:
                    buf[a] = p
                    a += 1
            for c in range(m):
                order[f, lo + c] = buf[c]

        mid = best_idx + 1
        feature[node] = best_f
        threshold[node] = x[boot[order[best_f, best_idx]], best_f]
        left[node] = n_nodes
        right[node] = n_nodes + 1
        st_lo[top] = mid
        st_hi[top] = hi
        st_depth[top] = depth + 1
        st_node[top] = n_nodes + 1
        top += 1
        st_lo[top] = lo
        st_hi[top] = mid
        st_depth[top] = depth + 1
        st_node[top] = n_nodes
        top += 1
        n_nodes += 2

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True)
def _predict(feature, threshold, left, right, value, offsets, queries):
    n_trees = offsets.shape[0] - 1
    out = np.zeros(queries.shape[0])
    for r in range(queries.shape[0]):
        acc = 0.0
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feature[base + node] >= 0:
                if queries[r, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            acc += value[base + node]
        out[r] = acc / n_trees
    return out


def default_max_features(d: int) -> int:
    return max(1, int(math.sqrt(d)))


def tree_seeds(seed: int, n_trees: int) -> np.ndarray:
    """Independent per-tree seeds split off ``seed``."""
    return np.random.SeedSequence(seed).generate_state(n_trees, dtype=np.uint32)


def grow_forest(
    x: np.ndarray,
    y: np.ndarray,
    n_trees: int = 100,
    max_depth: int = -1,
    min_leaf: int = 2,
    max_features: int = 0,
    bootstrap: bool = True,
    seed: int = 0,
) -> dict[str, np.ndarray]:
    """Fit a forest; returns the flattened tree arrays plus ``offsets`` (n_trees + 1)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, d = x.shape
    if n == 0:
        raise EmptyDatasetError("cannot grow a forest on an empty dataset")
    if n_trees < 1:
        raise ModelError("n_trees: must be >= 1")
    if min_leaf < 1:
        raise ModelError("min_leaf: must be >= 1")
    mf = default_max_features(d) if max_features <= 0 else min(max_features, d)
    parts = []
    for s in tree_seeds(seed, n_trees):
        if bootstrap:
            boot = np.random.default_rng(int(s)).integers(0, n, n)
        else:
            boot = np.arange(n)
        parts.append(_grow(x, y, boot.astype(np.int64), mf, min_leaf, max_depth, int(s)))
    sizes = [len(p[0]) for p in parts]
    return {
        "feature": np.concatenate([p[0] for p in parts]),
        "threshold": np.concatenate([p[1] for p in parts]),
        "left": np.concatenate([p[2] for p in parts]),
        "right": np.concatenate([p[3] for p in parts]),
        "value": np.concatenate([p[4] for p in parts]),
        "offsets": np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64),
    }


def forest_predict(forest: dict[str, np.ndarray], queries: np.ndarray) -> np.ndarray:
    q = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
    return _predict(
        forest["feature"], forest["threshold"], forest["left"], forest["right"],
        forest["value"], forest["offsets"], q,
    )


def tree_predictions(forest: dict[str, np.ndarray], queries: np.ndarray) -> np.ndarray:
    """Per-tree predictions, shape (n_trees, n_queries)."""
    off = forest["offsets"]
    out = []
    for t in range(len(off) - 1):
        sub = {k: forest[k][off[t]:off[t + 1]] for k in ("feature", "threshold", "left", "right", "value")}
        sub["offsets"] = np.array([0, off[t + 1] - off[t]], dtype=np.int64)
        out.append(forest_predict(sub, queries))
    return np.array(out)
