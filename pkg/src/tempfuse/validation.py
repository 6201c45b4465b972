"""Input checks shared by the estimators and the command line."""
from __future__ import annotations

import numpy as np

from .datasets import DynamicGraph
from .graph import Snapshot


def check_snapshots(snapshots, num_nodes=None) -> list[Snapshot]:
    """Validate a chronological snapshot sequence and return it as a list."""
    if isinstance(snapshots, Snapshot):
        snapshots = [snapshots]
    snapshots = list(snapshots)
    if not snapshots:
        raise ValueError("expected at least one snapshot")
    for s in snapshots:
        if not isinstance(s, Snapshot):
            raise TypeError(f"expected Snapshot objects, got {type(s).__name__}")
    n = snapshots[0].num_nodes if num_nodes is None else num_nodes
    for s in snapshots:
        if s.num_nodes != n:
            raise ValueError(f"snapshot {s.index} has {s.num_nodes} nodes, expected {n}")
    idx = [s.index for s in snapshots]
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ValueError(f"snapshot indices must increase strictly, got {idx}")
    return snapshots


def check_pairs(pairs, num_nodes: int) -> np.ndarray:
    """Coerce node pairs to an ``(m, 2)`` int64 array within ``[0, num_nodes)``."""
    arr = np.asarray(pairs)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"pairs must have shape (m, 2), got {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.mod(arr, 1) == 0):
            raise ValueError("pairs must contain integer node ids")
    arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() >= num_nodes:
        raise IndexError(f"pair index out of range for {num_nodes} nodes")
    return arr


def check_dynamic_graph(X) -> DynamicGraph:
    if not isinstance(X, DynamicGraph):
        raise TypeError(f"expected a DynamicGraph, got {type(X).__name__}")
    check_snapshots(X.snapshots, X.num_nodes)
    return X
