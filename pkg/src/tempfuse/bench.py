"""Throughput and memory spot-check over window length.

For every window ``w`` the bench fuses the ``w`` snapshots before a target
of a uniform random stream, times the fuse and one full-batch training step,
and records the traced peak allocation of a full-batch step against a
mini-batch pass over the same labeled edges.
"""
from __future__ import annotations

import time
import tracemalloc
from dataclasses import dataclass

from . import autodiff as ad
from ._rng import stream_rng
from .config import BenchConfig
from .datasets import uniform_stream, unique_positives
from .graph import binary_degrees, fuse
from .models import LinkPredictionModel
from .optim import OptimizerState, adam_step
from .sampling import LabeledEdges, link_neighbor_batches, sample_negatives

COLUMNS = ("w", "fused_edges", "fuse_ms", "step_ms", "full_peak_mb", "mini_peak_mb")


@dataclass
class BenchRow:
    w: int
    fused_edges: int
    fuse_ms: float
    step_ms: float
    full_peak_mb: float
    mini_peak_mb: float


def _step(model, opt, ctx, src, dst, labels):
    H = model.embed(ctx, training=False)
    loss = ad.bce_with_logits(model.decoder.logits(H, src, dst), labels)
    ad.backward(loss)
    adam_step(model.parameters, opt, 0.0)


def _traced_peak_mb(fn) -> float:
    tracemalloc.start()
    try:
        fn()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return peak / 2**20


def run_bench(cfg: BenchConfig, repeats: int = 3) -> list[BenchRow]:
    windows = sorted(set(cfg.windows))
    if not windows or windows[0] < 1:
        raise ValueError(f"windows must be positive, got {cfg.windows}")
    target = windows[-1]
    snaps = uniform_stream(cfg.num_nodes, cfg.edges_per_step, target + 1, cfg.seed)
    pos = unique_positives(snaps[target])
    neg = sample_negatives(pos, cfg.num_nodes, 1, stream_rng(cfg.seed, "negatives"))
    labeled = LabeledEdges.from_positives_and_negatives(pos, neg)
    rows = []
    for w in windows:
        window = snaps[target - w:target]
        fuse_s = min(_timed(lambda: fuse(window, float(target))) for _ in range(repeats))
        g = fuse(window, float(target))
        model = LinkPredictionModel(cfg.model, cfg.num_nodes, 1, cfg.hidden, 2, 0.0,
                                    seed=stream_rng(cfg.seed, "init"))
        opt = OptimizerState(base_lr=0.0)

        def full():
            _step(model, opt, model.encoder.context(g), labeled.src, labeled.dst, labeled.label)

        def mini():
            deg = binary_degrees(g).values
            for b in link_neighbor_batches(g, labeled, cfg.batch_size, cfg.fanout, 2,
                                           seed=stream_rng(cfg.seed, "loader", w), degrees=deg):
                ctx = model.encoder.context(b.graph, b.degrees, b.global_nodes)
                _step(model, opt, ctx, b.edge_label_index[0], b.edge_label_index[1],
                      b.edge_label)

        step_s = _timed(full)
        rows.append(BenchRow(w, g.num_edges, 1e3 * fuse_s, 1e3 * step_s,
                             _traced_peak_mb(full), _traced_peak_mb(mini)))
    return rows


def _timed(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def fuse_grows_linearly(rows, slack: float = 2.0) -> bool:
    """Fuse time at the largest window stays within ``slack`` times linear scaling."""
    lo, hi = rows[0], rows[-1]
    return hi.fuse_ms <= slack * (hi.w / lo.w) * max(lo.fuse_ms, 1e-3)


def minibatch_saves_memory(rows) -> bool:
    return rows[-1].mini_peak_mb < rows[-1].full_peak_mb


def format_table(rows) -> str:
    cells = [list(COLUMNS)]
    for r in rows:
        cells.append([str(r.w), str(r.fused_edges), f"{r.fuse_ms:.2f}", f"{r.step_ms:.1f}",
                      f"{r.full_peak_mb:.1f}", f"{r.mini_peak_mb:.1f}"])
    widths = [max(len(row[c]) for row in cells) for c in range(len(COLUMNS))]
    return "\n".join("  ".join(v.rjust(wd) for v, wd in zip(row, widths)) for row in cells)


def parse_table(text: str) -> list[dict]:
    lines = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    header, body = lines[0], lines[1:]
    if tuple(header) != COLUMNS:
        raise ValueError(f"unexpected header {header}")
    out = []
    for ln in body:
        if len(ln) != len(header):
            raise ValueError(f"row has {len(ln)} cells, expected {len(header)}")
        out.append({k: (int(v) if k in ("w", "fused_edges") else float(v))
                    for k, v in zip(header, ln)})
    return out
