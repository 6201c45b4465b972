"""Edge-list ingestion, snapshot binning, splits, evaluation negatives, fixtures.

Binary cache files share one framing (integers little-endian)::

    magic     8 bytes   b"TFSNAPS1" (snapshots) or b"TFNEGS01" (negatives)
    version   u32       currently 1
    seed      i64       seed the content was generated with (-1 if none)
    payload   format-specific, see ``save_snapshots`` / ``save_negatives``
"""
from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import Snapshot, build_snapshot
from .sampling import sample_negatives

FORMAT_VERSION = 1
SNAP_MAGIC = b"TFSNAPS1"
NEG_MAGIC = b"TFNEGS01"


@dataclass
class RawEventLog:
    src: np.ndarray
    dst: np.ndarray
    t: np.ndarray
    node_relabeling: dict = field(default_factory=dict)

    @property
    def num_nodes(self) -> int:
        return len(self.node_relabeling)

    def __len__(self):
        return int(self.src.shape[0])


@dataclass(frozen=True)
class SplitSpec:
    train: int
    val: int
    test: int

    def __post_init__(self):
        if min(self.train, self.val, self.test) < 1:
            raise ValueError(f"split counts must be positive, got {self.as_tuple()}")

    def as_tuple(self):
        return (self.train, self.val, self.test)

    @property
    def total(self):
        return self.train + self.val + self.test


@dataclass
class DynamicGraph:
    """A chronological snapshot sequence with its train/val/test split."""

    snapshots: list
    num_nodes: int
    split: SplitSpec
    name: str = "dataset"

    def __post_init__(self):
        if self.split.total != len(self.snapshots):
            raise ValueError(f"split {self.split.as_tuple()} sums to {self.split.total}, "
                             f"expected total steps {len(self.snapshots)}")

    def target_indices(self, split: str) -> list[int]:
        a, b = self.split.train, self.split.train + self.split.val
        ranges = {"train": range(0, a), "val": range(a, b), "test": range(b, self.split.total)}
        if split not in ranges:
            raise ValueError(f"unknown split {split!r}")
        return list(ranges[split])


def _sniff_rows(text: str):
    lines = [ln for ln in text.splitlines()]
    delim = None
    for ln in lines:
        s = ln.strip()
        if s and not s.startswith(("%", "#")):
            if "," in s:
                delim = ","
            elif "\t" in s:
                delim = "\t"
            break
    for lineno, ln in enumerate(lines, start=1):
        s = ln.strip()
        if not s or s.startswith(("%", "#")):
            continue
        if delim is None:
            yield lineno, s.split()
        else:
            yield lineno, [c.strip() for c in next(csv.reader(io.StringIO(s), delimiter=delim))]


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def parse_edge_list(path, format: str = "auto") -> RawEventLog:
    """Read a timestamped edge list (SNAP / KONECT style).

    ``format`` is ``"src-dst-time"``, ``"src-dst-weight-time"`` or ``"auto"``
    (three columns mean src-dst-time, four or more src-dst-weight-time).
    Comma, tab and whitespace separators are detected; ``%`` and ``#`` lines
    are comments and a non-numeric first row is treated as a header.
    Self-loops are dropped but their endpoints still count as nodes.
    """
    if format not in ("auto", "src-dst-time", "src-dst-weight-time"):
        raise ValueError(f"unknown edge-list format {format!r}")
    text = Path(path).read_text()
    raw_src, raw_dst, times = [], [], []
    first = True
    for lineno, cols in _sniff_rows(text):
        if first and not any(_is_number(c) for c in cols):
            first = False
            continue
        first = False
        if len(cols) < 3:
            raise ValueError(f"{path}:{lineno}: expected at least 3 columns, got {len(cols)}")
        fmt = format
        if fmt == "auto":
            fmt = "src-dst-time" if len(cols) == 3 else "src-dst-weight-time"
        tcol = 2 if fmt == "src-dst-time" else 3
        if len(cols) <= tcol:
            raise ValueError(f"{path}:{lineno}: missing timestamp column")
        try:
            ts = float(cols[tcol])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: bad timestamp {cols[tcol]!r}") from None
        if not math.isfinite(ts):
            raise ValueError(f"{path}:{lineno}: non-finite timestamp")
        raw_src.append(cols[0])
        raw_dst.append(cols[1])
        times.append(ts)
    if not times:
        raise ValueError(f"{path}: no edges found")
    return events_from_raw(raw_src, raw_dst, times)


def events_from_raw(raw_src, raw_dst, times) -> RawEventLog:
    ids = list(raw_src) + list(raw_dst)
    try:
        keys = sorted(set(int(x) for x in ids))
        conv = int
    except (TypeError, ValueError):
        keys = sorted(set(str(x) for x in ids))
        conv = str
    relabel = {k: i for i, k in enumerate(keys)}
    src = np.array([relabel[conv(x)] for x in raw_src], dtype=np.int64)
    dst = np.array([relabel[conv(x)] for x in raw_dst], dtype=np.int64)
    t = np.asarray(times, dtype=np.float64)
    keep = src != dst
    src, dst, t = src[keep], dst[keep], t[keep]
    order = np.argsort(t, kind="stable")
    return RawEventLog(src[order], dst[order], t[order], relabel)


def bin_snapshots(log: RawEventLog, num_steps: int, mode: str = "equal-duration") -> list[Snapshot]:
    """Cut the event stream into ``num_steps`` snapshots.

    Timestamps are rescaled so snapshot ``k`` covers ``[k, k + 1)``.  In
    equal-duration mode an event exactly on a boundary joins the earlier bin.
    """
    if num_steps < 2:
        raise ValueError(f"num_steps must be at least 2, got {num_steps}")
    m = len(log)
    if num_steps > m:
        raise ValueError(f"num_steps={num_steps} exceeds the number of events ({m})")
    t = log.t
    t0, t1 = float(t[0]), float(t[-1])
    if mode == "equal-duration":
        width = (t1 - t0) / num_steps
        if width <= 0:
            raise ValueError("all events share one timestamp; use equal-count binning")
        pos = (t - t0) / width
        bins = np.clip(np.ceil(pos).astype(np.int64) - 1, 0, num_steps - 1)
        tau = np.clip(pos, bins, np.nextafter(bins + 1.0, -np.inf))
    elif mode == "equal-count":
        per = math.ceil(m / num_steps)
        bins = np.arange(m) // per
        starts = t[np.minimum(np.arange(num_steps + 1) * per, m - 1)]
        lo, hi = starts[bins], starts[bins + 1]
        span = np.where(hi > lo, hi - lo, 1.0)
        frac = np.clip((t - lo) / span, 0.0, np.nextafter(1.0, 0.0))
        tau = bins + frac
    else:
        raise ValueError(f"unknown binning mode {mode!r}")
    n = max(log.num_nodes, int(max(log.src.max(), log.dst.max())) + 1)
    out = []
    for k in range(num_steps):
        sel = bins == k
        out.append(build_snapshot(np.column_stack([log.src[sel], log.dst[sel], tau[sel]]), n, k))
    return out


def time_split(snapshots, spec: SplitSpec):
    snapshots = list(snapshots)
    if spec.total != len(snapshots):
        raise ValueError(f"split {spec.as_tuple()} sums to {spec.total}, "
                         f"expected total steps {len(snapshots)}")
    a, b = spec.train, spec.train + spec.val
    return snapshots[:a], snapshots[a:b], snapshots[b:]


def unique_positives(s: Snapshot) -> np.ndarray:
    """Distinct directed ``(src, dst)`` pairs of a snapshot, in sorted order."""
    if s.num_edges == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(np.column_stack([s.src, s.dst]), axis=0)


@dataclass(frozen=True)
class EvalNegatives:
    """Fixed evaluation negatives: for positive ``p``, ``dst[p]`` holds ``k`` nodes."""

    snap: np.ndarray
    src: np.ndarray
    pos_dst: np.ndarray
    dst: np.ndarray
    k: int
    seed: int
    num_nodes: int

    def __len__(self):
        return int(self.dst.size)

    def for_snapshot(self, index: int):
        sel = self.snap == index
        return self.src[sel], self.pos_dst[sel], self.dst[sel]


def pregenerate_eval_negatives(eval_snapshots, num_nodes: int, k: int = 100, seed: int = 0,
                               path=None) -> EvalNegatives:
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    snaps, srcs, dsts, negs = [], [], [], []
    for s in eval_snapshots:
        pos = unique_positives(s)
        ns = sample_negatives(pos, num_nodes, k, np.random.default_rng([seed, s.index]))
        snaps.append(np.full(len(pos), s.index, dtype=np.int64))
        srcs.append(pos[:, 0])
        dsts.append(pos[:, 1])
        negs.append(ns.dst)
    out = EvalNegatives(
        snap=np.concatenate(snaps) if snaps else np.zeros(0, np.int64),
        src=np.concatenate(srcs) if srcs else np.zeros(0, np.int64),
        pos_dst=np.concatenate(dsts) if dsts else np.zeros(0, np.int64),
        dst=np.vstack(negs) if negs else np.zeros((0, k), np.int64),
        k=k, seed=seed, num_nodes=num_nodes,
    )
    if path is not None:
        save_negatives(path, out)
    return out


def _header(magic, seed):
    return magic + struct.pack("<Iq", FORMAT_VERSION, seed)


def _read_header(buf, magic, path):
    if buf[:8] != magic:
        raise ValueError(f"{path}: bad magic, not a {magic.decode()} file")
    version, seed = struct.unpack_from("<Iq", buf, 8)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    return seed, 20


def save_negatives(path, neg: EvalNegatives):
    """Payload: u64 num_positives, u32 k, u64 num_nodes, then int64 arrays
    snap[P], src[P], pos_dst[P] and dst[P*k] (row-major)."""
    p = len(neg.src)
    parts = [_header(NEG_MAGIC, neg.seed), struct.pack("<QIQ", p, neg.k, neg.num_nodes)]
    for a in (neg.snap, neg.src, neg.pos_dst, neg.dst.ravel()):
        parts.append(np.ascontiguousarray(a, dtype="<i8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_negatives(path) -> EvalNegatives:
    buf = Path(path).read_bytes()
    seed, pos = _read_header(buf, NEG_MAGIC, path)
    p, k, n = struct.unpack_from("<QIQ", buf, pos)
    pos += 20
    arrays = []
    for count in (p, p, p, p * k):
        arrays.append(np.frombuffer(buf, dtype="<i8", count=count, offset=pos).astype(np.int64))
        pos += 8 * count
    return EvalNegatives(arrays[0], arrays[1], arrays[2], arrays[3].reshape(p, k), k, seed, n)


def save_snapshots(path, snapshots, seed: int = -1):
    """Payload: u64 num_nodes, u64 num_snapshots, then per snapshot
    i64 index, u64 m, int64 src[m], int64 dst[m], float64 tau[m]."""
    snapshots = list(snapshots)
    n = snapshots[0].num_nodes if snapshots else 0
    parts = [_header(SNAP_MAGIC, seed), struct.pack("<QQ", n, len(snapshots))]
    for s in snapshots:
        parts.append(struct.pack("<qQ", s.index, s.num_edges))
        parts.append(np.ascontiguousarray(s.src, dtype="<i8").tobytes())
        parts.append(np.ascontiguousarray(s.dst, dtype="<i8").tobytes())
        parts.append(np.ascontiguousarray(s.tau, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_snapshots(path) -> list[Snapshot]:
    buf = Path(path).read_bytes()
    _, pos = _read_header(buf, SNAP_MAGIC, path)
    n, count = struct.unpack_from("<QQ", buf, pos)
    pos += 16
    out = []
    for _ in range(count):
        index, m = struct.unpack_from("<qQ", buf, pos)
        pos += 16
        src = np.frombuffer(buf, "<i8", m, pos)
        dst = np.frombuffer(buf, "<i8", m, pos + 8 * m)
        tau = np.frombuffer(buf, "<f8", m, pos + 16 * m)
        pos += 24 * m
        out.append(build_snapshot(np.column_stack([src, dst, tau]), n, index))
    return out


def generate_synthetic_hawkes(num_nodes: int, base_pairs: int, delta_true: float,
                              num_steps: int, seed: int, base_rate: float = 0.02,
                              excitation: float = 0.8) -> list[Snapshot]:
    """Self-exciting link stream over a fixed pool of directed node pairs.

    At each step a pair fires with probability
    ``base_rate + excitation * exp(-delta_true * age)``, where ``age`` is the
    number of steps since it last fired (pairs that never fired use the
    base rate alone).  Event times are uniform inside the step's bin.
    """
    if num_nodes < 2 or base_pairs < 1 or num_steps < 1 or delta_true < 0:
        raise ValueError("invalid synthetic Hawkes parameters")
    if not 0 <= base_rate + excitation <= 1:
        raise ValueError("base_rate + excitation must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    src = rng.integers(0, num_nodes, size=base_pairs)
    dst = (src + rng.integers(1, num_nodes, size=base_pairs)) % num_nodes
    last = np.full(base_pairs, -np.inf)
    out = []
    for t in range(num_steps):
        with np.errstate(over="ignore", invalid="ignore"):
            age = t - last
            boost = np.where(np.isfinite(last), np.exp(-delta_true * age), 0.0)
        if np.isinf(delta_true):
            boost = np.zeros(base_pairs)
        p = base_rate + excitation * np.nan_to_num(boost)
        fired = rng.random(base_pairs) < p
        last[fired] = t
        k = int(fired.sum())
        tau = t + rng.random(k)
        out.append(build_snapshot(np.column_stack([src[fired], dst[fired], tau]), num_nodes, t))
    return out


def synthetic_dynamic_graph(num_nodes=200, base_pairs=600, delta_true=0.5, num_steps=20,
                            seed=7, split=(14, 3, 3), **kw) -> DynamicGraph:
    snaps = generate_synthetic_hawkes(num_nodes, base_pairs, delta_true, num_steps, seed, **kw)
    return DynamicGraph(snaps, num_nodes, SplitSpec(*split), name=f"synthetic-hawkes-{seed}")


def uniform_stream(num_nodes: int, edges_per_step: int, num_steps: int, seed: int = 0):
    """Memoryless stream: uniform random directed edges, constant rate."""
    rng = np.random.default_rng(seed)
    out = []
    for t in range(num_steps):
        s = rng.integers(0, num_nodes, size=edges_per_step)
        d = (s + rng.integers(1, num_nodes, size=edges_per_step)) % num_nodes
        out.append(build_snapshot(np.column_stack([s, d, t + rng.random(edges_per_step)]),
                                  num_nodes, t))
    return out


def load_dataset(path, num_steps: int, split, format="auto", mode="equal-duration",
                 name=None) -> DynamicGraph:
    log = parse_edge_list(path, format)
    snaps = bin_snapshots(log, num_steps, mode)
    spec = split if isinstance(split, SplitSpec) else SplitSpec(*split)
    return DynamicGraph(snaps, snaps[0].num_nodes, spec, name=name or Path(path).stem)
