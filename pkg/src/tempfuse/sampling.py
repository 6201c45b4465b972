"""Negative sampling and link-neighbor mini-batches over a fused temporal graph."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Snapshot, TemporalGraph, binary_degrees, build_snapshot


@dataclass(frozen=True)
class NegativeSet:
    """``k`` corrupted pairs per positive: same source, uniform destination.

    ``dst`` has shape ``(num_positives, k)``.
    """

    src: np.ndarray
    dst: np.ndarray
    k: int
    seed: int

    def __len__(self):
        return int(self.dst.size)

    def pairs(self) -> np.ndarray:
        return np.column_stack([np.repeat(self.src, self.k), self.dst.ravel()])


def sample_negatives(positives, num_nodes: int, k: int, seed) -> NegativeSet:
    """Corrupt the destination of every positive ``k`` times, unfiltered."""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if num_nodes < 2:
        raise ValueError("negative sampling needs at least two nodes")
    pos = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    dst = rng.integers(0, num_nodes, size=(pos.shape[0], k))
    return NegativeSet(pos[:, 0].copy(), dst, k, seed if isinstance(seed, int) else -1)


@dataclass(frozen=True)
class LabeledEdges:
    src: np.ndarray
    dst: np.ndarray
    label: np.ndarray

    def __len__(self):
        return int(self.src.shape[0])

    @classmethod
    def from_positives_and_negatives(cls, positives, negatives: NegativeSet):
        pos = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
        neg = negatives.pairs()
        src = np.concatenate([pos[:, 0], neg[:, 0]])
        dst = np.concatenate([pos[:, 1], neg[:, 1]])
        label = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
        return cls(src, dst, label)


@dataclass
class Batch:
    """Sampled temporal subgraph around a chunk of labeled target pairs.

    ``global_nodes[l]`` is the global id of local node ``l``; the target
    endpoints come first.  ``graph`` holds the sampled temporal edges in local
    ids and ``degrees`` the full-graph binary degrees of the local nodes.
    """

    global_nodes: np.ndarray
    graph: TemporalGraph
    degrees: np.ndarray
    edge_label_index: np.ndarray
    edge_label: np.ndarray
    target_ids: np.ndarray
    seed: int

    @property
    def local_nodes(self) -> dict:
        return {int(g): l for l, g in enumerate(self.global_nodes.tolist())}

    @property
    def sub_edges(self):
        return self.graph.temporal_edges

    @property
    def num_nodes(self):
        return int(self.global_nodes.shape[0])


def _ranges(starts, stops):
    """Concatenate ``arange(s, e)`` for every pair without a Python loop."""
    lengths = stops - starts
    total = int(lengths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    offsets = np.repeat(stops - lengths.cumsum(), lengths)
    return np.arange(total) + offsets


def _normalize_fanout(fanout, num_layers):
    if fanout is None or np.isscalar(fanout):
        return [fanout] * num_layers
    fanout = list(fanout)
    if len(fanout) != num_layers:
        raise ValueError(f"need one fanout per layer ({num_layers}), got {fanout}")
    return fanout


def sample_subgraph(g: TemporalGraph, seeds, fanout, num_layers, rng):
    """Expand ``seeds`` for ``num_layers`` hops; return node order and edge ids.

    Up to ``fanout`` unique neighbors are drawn per node and hop (``None`` or
    negative means all); every parallel edge of a drawn neighbor is kept.
    """
    c = g.csr
    n = g.num_nodes
    fanout = _normalize_fanout(fanout, num_layers)
    order = list(dict.fromkeys(np.asarray(seeds, dtype=np.int64).tolist()))
    visited = np.zeros(n, dtype=bool)
    visited[order] = True
    expanded = np.zeros(n, dtype=bool)
    frontier = np.asarray(order, dtype=np.int64)
    chosen_pairs = []
    for hop in range(num_layers):
        frontier = frontier[~expanded[frontier]]
        if frontier.size == 0:
            break
        expanded[frontier] = True
        pairs = _ranges(c.node_ptr[frontier], c.node_ptr[frontier + 1])
        cap = fanout[hop]
        if cap is not None and cap >= 0 and pairs.size:
            owner = c.pair_src[pairs]
            keys = rng.random(pairs.size)
            srt = np.lexsort((keys, owner))
            pairs, owner = pairs[srt], owner[srt]
            first = np.ones(pairs.size, dtype=bool)
            first[1:] = owner[1:] != owner[:-1]
            group_start = np.maximum.accumulate(np.where(first, np.arange(pairs.size), 0))
            pairs = np.sort(pairs[(np.arange(pairs.size) - group_start) < cap])
        chosen_pairs.append(pairs)
        nbrs = c.pair_dst[pairs]
        new = np.unique(nbrs[~visited[nbrs]])
        visited[new] = True
        order.extend(new.tolist())
        frontier = new
    pairs = np.concatenate(chosen_pairs) if chosen_pairs else np.zeros(0, np.int64)
    edge_ids = np.sort(c.edge_order[_ranges(c.pair_ptr[pairs], c.pair_ptr[pairs + 1])])
    return np.asarray(order, dtype=np.int64), edge_ids


def induced_batch_graph(g: TemporalGraph, nodes, edge_ids) -> TemporalGraph:
    local = np.full(g.num_nodes, -1, dtype=np.int64)
    local[nodes] = np.arange(len(nodes))
    return TemporalGraph.from_arrays(len(nodes), local[g.src[edge_ids]], local[g.dst[edge_ids]],
                                     g.tau[edge_ids], g.snap[edge_ids], g.window_end,
                                     symmetrized=g.symmetrized,
                                     snapshot_indices=g.snapshot_indices)


def link_neighbor_batches(g: TemporalGraph, targets: LabeledEdges, batch_size: int,
                          fanout=None, num_layers: int = 2, seed=0, degrees=None,
                          shuffle=True) -> list[Batch]:
    """Partition labeled targets into batches, each with its sampled subgraph."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be positive, got {batch_size}")
    m = len(targets)
    if m == 0:
        return []
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    deg = binary_degrees(g).values if degrees is None else np.asarray(degrees)
    perm = rng.permutation(m) if shuffle else np.arange(m)
    batches = []
    for start in range(0, m, batch_size):
        ids = perm[start:start + batch_size]
        src, dst = targets.src[ids], targets.dst[ids]
        seeds = np.concatenate([src, dst])
        nodes, edge_ids = sample_subgraph(g, seeds, fanout, num_layers, rng)
        local = np.full(g.num_nodes, -1, dtype=np.int64)
        local[nodes] = np.arange(len(nodes))
        batches.append(Batch(
            global_nodes=nodes,
            graph=induced_batch_graph(g, nodes, edge_ids),
            degrees=deg[nodes],
            edge_label_index=np.vstack([local[src], local[dst]]),
            edge_label=targets.label[ids].copy(),
            target_ids=ids,
            seed=seed if isinstance(seed, int) else -1,
        ))
    return batches


def split_by_snapshot(b: Batch, snapshot_indices=None) -> list[Snapshot]:
    """Partition the batch's temporal edges back into per-snapshot graphs.

    One snapshot is emitted per index of the fused window, empty ones
    included, so positions line up with the original window.
    """
    g = b.graph
    if snapshot_indices is None:
        snapshot_indices = g.snapshot_indices or sorted(set(g.snap.tolist()))
    out = []
    for k in snapshot_indices:
        sel = g.snap == k
        edges = np.column_stack([g.src[sel], g.dst[sel], g.tau[sel]])
        out.append(build_snapshot(edges, max(g.num_nodes, 1), k))
    return out
