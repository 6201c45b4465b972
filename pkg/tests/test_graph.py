from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_snapshots
from tempfuse.graph import (binary_degrees, build_snapshot, collapse_parallel, fuse,
                            grouped_neighbors, temporal_neighbors)


def test_build_snapshot_minimal():
    s = build_snapshot([(0, 1, 5.0)], 2, 0)
    assert s.num_edges == 1
    assert s.edges == [(0, 1, 5.0)]


def test_build_snapshot_empty_is_valid():
    s = build_snapshot([], 3, 1)
    assert s.num_edges == 0 and s.index == 1


def test_build_snapshot_rejects_out_of_range_node():
    with pytest.raises(ValueError, match="node 5 out of range"):
        build_snapshot([(0, 5, 1.0)], 2, 0)


def test_build_snapshot_keeps_order_and_duplicates():
    s = build_snapshot([(1, 0, 2.0), (0, 1, 1.0), (0, 1, 1.0)], 2, 0)
    assert s.edges == [(1, 0, 2.0), (0, 1, 1.0), (0, 1, 1.0)]


def test_snapshot_arrays_are_read_only():
    s = build_snapshot([(0, 1, 0.5)], 2, 0)
    with pytest.raises(ValueError):
        s.src[0] = 1


def test_fuse_counts_edges():
    a = build_snapshot([(0, 1, 0.1), (1, 2, 0.2), (2, 3, 0.3)], 4, 0)
    b = build_snapshot([(0, 2, 1.1), (3, 1, 1.5)], 4, 1)
    g = fuse([a, b], 2.0, symmetrize=False)
    assert g.num_edges == 5
    assert fuse([a, b], 2.0).num_edges == 10
    assert sorted(g.snap.tolist()) == [0, 0, 0, 1, 1]


def test_fuse_keeps_parallel_edges_in_one_group():
    s = build_snapshot([(0, 1, 1.0), (0, 1, 2.0)], 2, 0)
    g = fuse([s], 3.0, symmetrize=False)
    assert g.num_edges == 2
    assert g.csr.num_pairs == 1
    assert grouped_neighbors(g, 0) == {1: [1.0, 2.0]}


def test_fuse_rejects_future_leakage():
    s = build_snapshot([(0, 1, 2.0)], 2, 0)
    with pytest.raises(ValueError, match="future leakage"):
        fuse([s], 2.0)


def test_fuse_rejects_unordered_or_empty():
    a = build_snapshot([], 2, 1)
    b = build_snapshot([], 2, 0)
    with pytest.raises(ValueError):
        fuse([a, b], 5.0)
    with pytest.raises(ValueError):
        fuse([], 5.0)


def test_fuse_index_time_mode_uses_snapshot_index():
    s = build_snapshot([(0, 1, 3.7)], 2, 3)
    g = fuse([s], 4.0, symmetrize=False, time_mode="index")
    assert g.tau.tolist() == [3.0]


def test_symmetrized_edges_have_reverse_twins(rng):
    g = fuse(random_snapshots(rng, 8, 3, 10), 3.0)
    fwd = Counter(zip(g.src.tolist(), g.dst.tolist(), g.tau.tolist(), g.snap.tolist()))
    rev = Counter(zip(g.dst.tolist(), g.src.tolist(), g.tau.tolist(), g.snap.tolist()))
    assert fwd == rev


def test_binary_degrees_collapse_parallel_edges():
    s = build_snapshot([(0, 1, 0.1), (0, 1, 0.5)], 2, 0)
    assert binary_degrees(fuse([s], 1.0, symmetrize=False))[0] == 1


def test_binary_degrees_triangle():
    s = build_snapshot([(0, 1, 0.1), (0, 2, 0.2), (1, 2, 0.3)], 3, 0)
    assert binary_degrees(fuse([s], 1.0)).values.tolist() == [2, 2, 2]


def test_binary_degrees_match_set_oracle(rng):
    g = fuse(random_snapshots(rng, 50, 4, 60), 4.0)
    oracle = [len({j for i, j in zip(g.src, g.dst) if i == v}) for v in range(50)]
    assert binary_degrees(g).values.tolist() == oracle


def test_temporal_neighbors_examples():
    s = build_snapshot([(0, 1, 1.0), (0, 1, 2.0), (0, 2, 2.0)], 4, 0)
    g = fuse([s], 3.0, symmetrize=False)
    assert temporal_neighbors(g, 3) == []
    assert grouped_neighbors(g, 0) == {1: [1.0, 2.0], 2: [2.0]}
    with pytest.raises(ValueError):
        temporal_neighbors(g, 4)


def test_temporal_neighbors_match_linear_scan(rng):
    g = fuse(random_snapshots(rng, 12, 3, 20), 3.0)
    for i in range(12):
        scan = sorted((j, t, k) for s, j, t, k in g.temporal_edges if s == i)
        assert sorted(temporal_neighbors(g, i)) == scan


def test_collapse_parallel_keeps_one_edge_per_pair():
    s = build_snapshot([(0, 1, 0.1), (0, 1, 0.2), (1, 2, 0.3)], 3, 0)
    c = collapse_parallel(fuse([s], 1.0))
    assert c.num_edges == 4
    assert sorted(zip(c.src.tolist(), c.dst.tolist())) == [(0, 1), (1, 0), (1, 2), (2, 1)]


edge_lists = st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9), st.floats(0, 0.999)),
                      max_size=25)


@settings(max_examples=60, deadline=None)
@given(st.lists(edge_lists, min_size=1, max_size=4), st.booleans())
def test_fusion_conserves_edges(snap_edges, sym):
    snaps = [build_snapshot([(a, b, k + t) for a, b, t in e], 10, k)
             for k, e in enumerate(snap_edges)]
    g = fuse(snaps, float(len(snaps)), symmetrize=sym)
    total = sum(s.num_edges for s in snaps)
    assert g.num_edges == total * (2 if sym else 1)
    # neighbor lists cover the edge list exactly
    covered = Counter((i, j, t, k) for i in range(10) for j, t, k in temporal_neighbors(g, i))
    assert covered == Counter(g.temporal_edges)


@settings(max_examples=40, deadline=None)
@given(st.lists(edge_lists, min_size=1, max_size=4), st.randoms(use_true_random=False))
def test_fusion_is_order_insensitive_as_multiset(snap_edges, rnd):
    snaps = [build_snapshot([(a, b, k + t) for a, b, t in e], 10, k)
             for k, e in enumerate(snap_edges)]
    edges = Counter(fuse(snaps, 10.0).temporal_edges)
    # reindex a shuffled copy so indices stay increasing; multiset of (src, dst, tau) is equal
    perm = list(range(len(snaps)))
    rnd.shuffle(perm)
    shuffled = [build_snapshot(snaps[p].edges, 10, k) for k, p in enumerate(perm)]
    other = Counter((s, d, t) for s, d, t, _ in fuse(shuffled, 10.0).temporal_edges)
    assert other == Counter((s, d, t) for s, d, t, _ in edges.elements())


@settings(max_examples=40, deadline=None)
@given(edge_lists.filter(bool), st.data())
def test_degrees_invariant_to_duplicating_an_edge(edges, data):
    k = data.draw(st.integers(0, len(edges) - 1))
    base = fuse([build_snapshot(edges, 10, 0)], 1.0)
    dup = fuse([build_snapshot(edges + [edges[k]], 10, 0)], 1.0)
    assert np.array_equal(binary_degrees(base).values, binary_degrees(dup).values)
