"""Snapshots and the fused temporal multigraph.

A ``Snapshot`` is one time bin of a discrete-time dynamic graph.  ``fuse``
merges a window of snapshots into a single ``TemporalGraph`` in which every
edge keeps its timestamp and originating snapshot index, so two nodes may be
joined by many parallel temporal edges.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Snapshot:
    """All directed, timestamped edges observed in one time bin."""

    index: int
    num_nodes: int
    src: np.ndarray
    dst: np.ndarray
    tau: np.ndarray

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return list(zip(self.src.tolist(), self.dst.tolist(), self.tau.tolist()))

    @property
    def num_edges(self) -> int:
        return int(self.src.shape[0])

    def __len__(self):
        return self.num_edges

    def __repr__(self):
        return f"Snapshot(index={self.index}, num_nodes={self.num_nodes}, num_edges={self.num_edges})"


def build_snapshot(edges, num_nodes: int, index: int) -> Snapshot:
    """Build a snapshot from ``(src, dst, tau)`` triples.

    Insertion order and duplicate edges are preserved.  ``edges`` may also be
    an ``(m, 3)`` array.
    """
    if num_nodes <= 0:
        raise ValueError(f"num_nodes must be positive, got {num_nodes}")
    arr = np.asarray(edges, dtype=np.float64)
    if arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("edges must be a sequence of (src, dst, tau) triples")
    src = arr[:, 0].astype(np.int64)
    dst = arr[:, 1].astype(np.int64)
    if np.any(src != arr[:, 0]) or np.any(dst != arr[:, 1]):
        raise ValueError("node ids must be integers")
    bad = np.flatnonzero((src < 0) | (src >= num_nodes) | (dst < 0) | (dst >= num_nodes))
    if bad.size:
        k = int(bad[0])
        node = int(src[k]) if not 0 <= src[k] < num_nodes else int(dst[k])
        raise ValueError(
            f"node {node} out of range for num_nodes={num_nodes} "
            f"(edge #{k}: {int(src[k])} -> {int(dst[k])} at tau={arr[k, 2]})"
        )
    return Snapshot(
        index=int(index),
        num_nodes=int(num_nodes),
        src=_frozen(src, np.int64),
        dst=_frozen(dst, np.int64),
        tau=_frozen(arr[:, 2], np.float64),
    )


@dataclass(frozen=True)
class CsrIndex:
    """Temporal edges grouped by source node, then by unique neighbor.

    ``edge_order`` lists edge ids sorted by ``(src, dst, tau)``.  Unique
    ``(src, dst)`` pairs are numbered in the same order; the edges of pair
    ``p`` are ``edge_order[pair_ptr[p]:pair_ptr[p + 1]]`` and the pairs of node
    ``i`` are ``node_ptr[i]:node_ptr[i + 1]``.
    """

    edge_order: np.ndarray
    pair_ptr: np.ndarray
    pair_src: np.ndarray
    pair_dst: np.ndarray
    node_ptr: np.ndarray
    edge_pair: np.ndarray  # pair id of every edge, in original edge order

    @property
    def num_pairs(self) -> int:
        return int(self.pair_src.shape[0])


def _build_csr(num_nodes, src, dst, tau) -> CsrIndex:
    order = np.lexsort((tau, dst, src))
    s, d = src[order], dst[order]
    if order.size:
        new_pair = np.empty(order.size, dtype=bool)
        new_pair[0] = True
        new_pair[1:] = (s[1:] != s[:-1]) | (d[1:] != d[:-1])
        starts = np.flatnonzero(new_pair)
    else:
        starts = np.zeros(0, dtype=np.int64)
    pair_ptr = np.append(starts, order.size)
    pair_src, pair_dst = s[starts], d[starts]
    node_ptr = np.searchsorted(pair_src, np.arange(num_nodes + 1))
    sorted_pair = np.cumsum(new_pair) - 1 if order.size else np.zeros(0, np.int64)
    edge_pair = np.empty(order.size, dtype=np.int64)
    edge_pair[order] = sorted_pair
    return CsrIndex(
        edge_order=_frozen(order, np.int64),
        pair_ptr=_frozen(pair_ptr, np.int64),
        pair_src=_frozen(pair_src, np.int64),
        pair_dst=_frozen(pair_dst, np.int64),
        node_ptr=_frozen(node_ptr, np.int64),
        edge_pair=_frozen(edge_pair, np.int64),
    )


@dataclass(frozen=True)
class TemporalGraph:
    """Fused temporal multigraph over a window of snapshots.

    ``window_end`` is the start of the frame being predicted; every edge
    timestamp lies strictly before it.  Arrays are read-only.
    """

    num_nodes: int
    src: np.ndarray
    dst: np.ndarray
    tau: np.ndarray
    snap: np.ndarray
    window_end: float
    symmetrized: bool = False
    snapshot_indices: tuple = ()
    csr: CsrIndex = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.csr is None:
            object.__setattr__(self, "csr", _build_csr(self.num_nodes, self.src, self.dst, self.tau))

    @classmethod
    def from_arrays(cls, num_nodes, src, dst, tau, snap, window_end, symmetrized=False,
                    snapshot_indices=()):
        return cls(
            num_nodes=int(num_nodes),
            src=_frozen(src, np.int64),
            dst=_frozen(dst, np.int64),
            tau=_frozen(tau, np.float64),
            snap=_frozen(snap, np.int64),
            window_end=float(window_end),
            symmetrized=bool(symmetrized),
            snapshot_indices=tuple(int(k) for k in snapshot_indices),
        )

    @property
    def num_edges(self) -> int:
        return int(self.src.shape[0])

    @property
    def age(self) -> np.ndarray:
        return self.window_end - self.tau

    @property
    def temporal_edges(self) -> list[tuple[int, int, float, int]]:
        return list(zip(self.src.tolist(), self.dst.tolist(), self.tau.tolist(), self.snap.tolist()))

    def __repr__(self):
        return (f"TemporalGraph(num_nodes={self.num_nodes}, num_edges={self.num_edges}, "
                f"window_end={self.window_end}, symmetrized={self.symmetrized})")


def fuse(snapshots: Sequence[Snapshot], window_end: float, symmetrize: bool = True,
         time_mode: str = "exact") -> TemporalGraph:
    """Merge a window of snapshots into one temporal multigraph.

    With ``time_mode="index"`` every edge takes its snapshot index as
    timestamp instead of the recorded event time.  ``symmetrize`` appends the
    reverse of every edge with the same timestamp and snapshot index.
    """
    snapshots = list(snapshots)
    if not snapshots:
        raise ValueError("fuse needs at least one snapshot")
    if time_mode not in ("exact", "index"):
        raise ValueError(f"unknown time_mode {time_mode!r}")
    num_nodes = snapshots[0].num_nodes
    indices = [s.index for s in snapshots]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise ValueError(f"snapshot indices must be strictly increasing, got {indices}")
    for s in snapshots:
        if s.num_nodes != num_nodes:
            raise ValueError("snapshots disagree on num_nodes")
    src = np.concatenate([s.src for s in snapshots])
    dst = np.concatenate([s.dst for s in snapshots])
    snap = np.concatenate([np.full(s.num_edges, s.index, dtype=np.int64) for s in snapshots])
    if time_mode == "exact":
        tau = np.concatenate([s.tau for s in snapshots])
    else:
        tau = snap.astype(np.float64)
    late = np.flatnonzero(tau >= window_end)
    if late.size:
        k = int(late[0])
        raise ValueError(
            f"edge {int(src[k])} -> {int(dst[k])} at tau={tau[k]} (snapshot {int(snap[k])}) "
            f"is not before window_end={window_end}: future leakage"
        )
    if symmetrize:
        src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
        tau = np.concatenate([tau, tau])
        snap = np.concatenate([snap, snap])
    return TemporalGraph.from_arrays(num_nodes, src, dst, tau, snap, window_end,
                                     symmetrized=symmetrize, snapshot_indices=indices)


def collapse_parallel(g: TemporalGraph) -> TemporalGraph:
    """Drop timestamps and merge parallel edges (one edge per unique pair)."""
    c = g.csr
    zeros = np.zeros(c.num_pairs)
    return TemporalGraph.from_arrays(g.num_nodes, c.pair_src, c.pair_dst, zeros,
                                     np.zeros(c.num_pairs, np.int64), 1.0,
                                     symmetrized=g.symmetrized,
                                     snapshot_indices=g.snapshot_indices)


@dataclass(frozen=True)
class DegreeVector:
    """Number of distinct neighbors per node."""

    values: np.ndarray

    def __getitem__(self, i):
        return self.values[i]

    def __len__(self):
        return len(self.values)


def binary_degrees(g: TemporalGraph) -> DegreeVector:
    return DegreeVector(_frozen(np.diff(g.csr.node_ptr), np.int64))


def temporal_neighbors(g: TemporalGraph, i: int) -> list[tuple[int, float, int]]:
    """Temporal edges leaving ``i`` as ``(j, tau, snap_index)``, grouped by ``j``."""
    if not 0 <= i < g.num_nodes:
        raise ValueError(f"node {i} out of range for num_nodes={g.num_nodes}")
    c = g.csr
    lo, hi = c.pair_ptr[c.node_ptr[i]], c.pair_ptr[c.node_ptr[i + 1]]
    ids = c.edge_order[lo:hi]
    return list(zip(g.dst[ids].tolist(), g.tau[ids].tolist(), g.snap[ids].tolist()))


def grouped_neighbors(g: TemporalGraph, i: int) -> dict[int, list[float]]:
    out: dict[int, list[float]] = {}
    for j, tau, _ in temporal_neighbors(g, i):
        out.setdefault(j, []).append(tau)
    return out

