"""numpy implementations of the compiled kernels, used when the extension
is not built (or when ``CASEPRIVACY_PURE_PYTHON=1``)."""
from __future__ import annotations

import numpy as np


def group_first_seen(keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keys = np.ascontiguousarray(keys, dtype=np.int64)
    if keys.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    _, first, inverse, counts = np.unique(keys, return_index=True, return_inverse=True, return_counts=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[inverse.ravel()].astype(np.int64), counts[order].astype(np.int64)


def count_distinct(group_ids: np.ndarray, values: np.ndarray, n_groups: int) -> np.ndarray:
    group_ids = np.asarray(group_ids, dtype=np.int64)
    values = np.asarray(values, dtype=np.int64)
    keep = values >= 0
    if not keep.any():
        return np.zeros(n_groups, dtype=np.int64)
    pairs = np.unique(np.stack([group_ids[keep], values[keep]], axis=1), axis=0)
    return np.bincount(pairs[:, 0], minlength=n_groups).astype(np.int64)
