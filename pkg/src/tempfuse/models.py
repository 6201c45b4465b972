"""Hawkes-GCN / Hawkes-GAT encoders, plain GCN / GAT baselines, link decoder."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Segments, Tensor
from .graph import DegreeVector, TemporalGraph, binary_degrees

MODEL_NAMES = ("hawkes-gcn", "hawkes-gat", "gcn", "gat")


@dataclass
class GraphContext:
    """Index arrays one encoder pass needs, precomputed once per graph.

    ``global_ids`` maps local rows to global node ids (identity for the full
    graph); per-node parameters are looked up through it.  ``degrees`` may
    come from a larger graph than ``graph`` itself, which is how sampled
    subgraphs keep the full-graph normalization.
    """

    graph: TemporalGraph
    degrees: np.ndarray
    global_ids: np.ndarray
    age: np.ndarray
    edge_norm: np.ndarray
    edge_segments: Segments
    pair_segments: Segments

    @property
    def num_nodes(self):
        return self.graph.num_nodes

    @classmethod
    def build(cls, g: TemporalGraph, degrees=None, global_ids=None):
        deg = binary_degrees(g).values if degrees is None else np.asarray(
            degrees.values if isinstance(degrees, DegreeVector) else degrees)
        deg = np.asarray(deg, dtype=np.float64)
        if deg.shape != (g.num_nodes,):
            raise ValueError(f"degrees has shape {deg.shape}, expected ({g.num_nodes},)")
        if global_ids is None:
            global_ids = np.arange(g.num_nodes)
        safe = np.where(deg > 0, deg, 1.0)
        norm = 1.0 / np.sqrt(safe[g.src] * safe[g.dst])
        c = g.csr
        return cls(
            graph=g,
            degrees=deg,
            global_ids=np.asarray(global_ids, dtype=np.int64),
            age=(g.window_end - g.tau)[:, None],
            edge_norm=norm[:, None],
            edge_segments=Segments(g.src, g.num_nodes),
            pair_segments=Segments(c.pair_src, g.num_nodes),
        )


@dataclass
class PlainContext:
    """Deduplicated, timestamp-free adjacency with self-loops for the baselines."""

    num_nodes: int
    src: np.ndarray
    dst: np.ndarray
    norm: np.ndarray
    segments: Segments

    @classmethod
    def build(cls, g: TemporalGraph, self_loops=True, degrees=None):
        c = g.csr
        src, dst = c.pair_src, c.pair_dst
        n = g.num_nodes
        if self_loops:
            keep = src != dst
            loops = np.arange(n)
            src = np.concatenate([src[keep], loops])
            dst = np.concatenate([dst[keep], loops])
        if degrees is None:
            deg = np.bincount(src, minlength=n).astype(np.float64)
        else:
            deg = np.asarray(degrees.values if isinstance(degrees, DegreeVector) else degrees,
                             dtype=np.float64) + (1.0 if self_loops else 0.0)
        safe = np.where(deg > 0, deg, 1.0)
        norm = (1.0 / np.sqrt(safe[src] * safe[dst]))[:, None]
        return cls(n, src, dst, norm, Segments(src, n))


def _glorot(rng, shape, name):
    return Parameter(ad.glorot_uniform(rng, shape[0], shape[1], shape), name=name)


class HawkesGcnLayer:
    """Time-decayed message passing with a learnable decay rate per source node.

    ``out_i = H_i W_root + sum_{(i,j,tau)} exp(-d_i (t' - tau)) / sqrt(deg_i deg_j) H_j W``
    with ``d_i = softplus(delta_raw_i)``.
    """

    def __init__(self, d_in, d_out, num_nodes, rng, name="layer", use_bn=False):
        self.W = _glorot(rng, (d_in, d_out), f"{name}.W")
        self.W_root = _glorot(rng, (d_in, d_out), f"{name}.W_root")
        self.delta_raw = Parameter(np.zeros((num_nodes, 1)), name=f"{name}.delta_raw")
        self.use_bn = use_bn
        self.bn = ad.BatchNormState(d_out) if use_bn else None

    @property
    def parameters(self):
        return [self.W, self.W_root, self.delta_raw]

    def delta(self) -> np.ndarray:
        return np.logaddexp(0.0, self.delta_raw.value[:, 0])

    def forward(self, H: Tensor, ctx: GraphContext, training=False) -> Tensor:
        g = ctx.graph
        HW = H @ self.W
        delta = ad.softplus(ad.gather_rows(self.delta_raw, ctx.global_ids))
        edge_delta = ad.gather_rows(delta, g.src)
        decay = ad.exp(ad.scale(ad.mul_const(edge_delta, ctx.age), -1.0))
        coef = ad.mul_const(decay, ctx.edge_norm)
        msg = ad.gather_rows(HW, g.dst)
        out = ad.segment_weighted_sum(msg, coef, ctx.edge_segments) + H @ self.W_root
        if self.use_bn:
            out = ad.row_normalize_bn(out, self.bn, training)
        return out


class HawkesGatLayer:
    """Time-decayed message passing whose decay rate is an attention score.

    One score per unique neighbor pair, softmax-normalized over the unique
    neighbors of the source node; every parallel edge of the pair shares it.
    """

    def __init__(self, d_in, d_out, num_nodes, rng, name="layer", use_bn=False):
        self.W = _glorot(rng, (d_in, d_out), f"{name}.W")
        self.W_root = _glorot(rng, (d_in, d_out), f"{name}.W_root")
        self.a = Parameter(ad.glorot_uniform(rng, 2 * d_out, 1), name=f"{name}.a")
        self.use_bn = use_bn
        self.bn = ad.BatchNormState(d_out) if use_bn else None

    @property
    def parameters(self):
        return [self.W, self.W_root, self.a]

    def attention(self, HW: Tensor, ctx: GraphContext) -> Tensor:
        c = ctx.graph.csr
        pair_feat = ad.concat_cols(ad.gather_rows(HW, c.pair_src), ad.gather_rows(HW, c.pair_dst))
        scores = ad.leaky_relu(pair_feat @ self.a)
        return ad.segment_softmax(scores, ctx.pair_segments)

    def forward(self, H: Tensor, ctx: GraphContext, training=False) -> Tensor:
        g = ctx.graph
        root = H @ self.W_root
        if g.num_edges == 0:
            out = root
        else:
            HW = H @ self.W
            att = self.attention(HW, ctx)
            edge_delta = ad.gather_rows(att, g.csr.edge_pair)
            decay = ad.exp(ad.scale(ad.mul_const(edge_delta, ctx.age), -1.0))
            coef = ad.mul_const(decay, ctx.edge_norm)
            msg = ad.gather_rows(HW, g.dst)
            out = ad.segment_weighted_sum(msg, coef, ctx.edge_segments) + root
        if self.use_bn:
            out = ad.row_normalize_bn(out, self.bn, training)
        return out


class GcnLayer:
    """Symmetric-normalized GCN over unique neighbors (plus self-loop)."""

    def __init__(self, d_in, d_out, num_nodes, rng, name="layer", use_bn=False):
        self.W = _glorot(rng, (d_in, d_out), f"{name}.W")

    @property
    def parameters(self):
        return [self.W]

    def forward(self, H: Tensor, ctx: PlainContext, training=False) -> Tensor:
        msg = ad.gather_rows(H @ self.W, ctx.dst)
        return ad.segment_weighted_sum(msg, Tensor(ctx.norm), ctx.segments)


class GatLayer:
    """Single-head GAT over unique neighbors (plus self-loop)."""

    def __init__(self, d_in, d_out, num_nodes, rng, name="layer", use_bn=False):
        self.W = _glorot(rng, (d_in, d_out), f"{name}.W")
        self.a = Parameter(ad.glorot_uniform(rng, 2 * d_out, 1), name=f"{name}.a")

    @property
    def parameters(self):
        return [self.W, self.a]

    def attention(self, HW: Tensor, ctx: PlainContext) -> Tensor:
        feat = ad.concat_cols(ad.gather_rows(HW, ctx.src), ad.gather_rows(HW, ctx.dst))
        return ad.segment_softmax(ad.leaky_relu(feat @ self.a), ctx.segments)

    def forward(self, H: Tensor, ctx: PlainContext, training=False) -> Tensor:
        HW = H @ self.W
        if len(ctx.segments) == 0:
            return ad.scale(HW, 0.0)
        att = self.attention(HW, ctx)
        return ad.segment_weighted_sum(ad.gather_rows(HW, ctx.dst), att, ctx.segments)


_LAYERS = {"hawkes-gcn": HawkesGcnLayer, "hawkes-gat": HawkesGatLayer,
           "gcn": GcnLayer, "gat": GatLayer}


def hawkes_gcn_forward(layer: HawkesGcnLayer, H, g: TemporalGraph, deg=None):
    return layer.forward(ad.as_tensor(H), GraphContext.build(g, deg))


def hawkes_gat_forward(layer: HawkesGatLayer, H, g: TemporalGraph, deg=None):
    return layer.forward(ad.as_tensor(H), GraphContext.build(g, deg))


def plain_gcn_forward(layer: GcnLayer, H, g_dedup: TemporalGraph, self_loops=True):
    return layer.forward(ad.as_tensor(H), PlainContext.build(g_dedup, self_loops))


def plain_gat_forward(layer: GatLayer, H, g_dedup: TemporalGraph, self_loops=True):
    return layer.forward(ad.as_tensor(H), PlainContext.build(g_dedup, self_loops))


class Encoder:
    """Stack of message-passing layers with ReLU and dropout in between."""

    def __init__(self, kind, d_in, hidden, num_layers, num_nodes, rng, dropout=0.1,
                 use_bn=False):
        if kind not in _LAYERS:
            raise ValueError(f"unknown model {kind!r}; choose from {MODEL_NAMES}")
        self.kind = kind
        self.dropout = dropout
        cls = _LAYERS[kind]
        dims = [d_in] + [hidden] * num_layers
        self.layers = [cls(dims[k], dims[k + 1], num_nodes, rng, name=f"enc.{k}", use_bn=use_bn)
                       for k in range(num_layers)]

    @property
    def hawkes(self):
        return self.kind.startswith("hawkes")

    @property
    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters]

    def context(self, g: TemporalGraph, degrees=None, global_ids=None):
        if self.hawkes:
            return GraphContext.build(g, degrees, global_ids)
        return PlainContext.build(g, self_loops=True, degrees=degrees)

    def forward(self, H, ctx, training=False, rng=None) -> Tensor:
        H = ad.as_tensor(H)
        last = len(self.layers) - 1
        for k, layer in enumerate(self.layers):
            H = layer.forward(H, ctx, training)
            if k < last:
                H = ad.relu(H)
                H = ad.dropout(H, self.dropout, rng, training)
        return H


class LinkDecoder:
    """``sigmoid(MLP([H_i || H_j]))`` with one ReLU hidden layer of width ``d``."""

    def __init__(self, d, rng, name="dec"):
        self.W1 = _glorot(rng, (2 * d, d), f"{name}.W1")
        self.b1 = Parameter(np.zeros((1, d)), name=f"{name}.b1")
        self.W2 = _glorot(rng, (d, 1), f"{name}.W2")
        self.b2 = Parameter(np.zeros((1, 1)), name=f"{name}.b2")

    @property
    def parameters(self):
        return [self.W1, self.b1, self.W2, self.b2]

    def forward(self, H: Tensor, src, dst) -> Tensor:
        return ad.sigmoid(self.logits(H, src, dst))

    def logits(self, H: Tensor, src, dst) -> Tensor:
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        n = H.shape[0]
        if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
            raise IndexError(f"pair index out of range for {n} nodes")
        x = ad.concat_cols(ad.gather_rows(H, src), ad.gather_rows(H, dst))
        h = ad.relu(ad.add_row(x @ self.W1, self.b1))
        return ad.add_row(h @ self.W2, self.b2)


def decode(decoder: LinkDecoder, H, pairs) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return decoder.forward(ad.as_tensor(H), pairs[:, 0], pairs[:, 1]).value[:, 0]


class LinkPredictionModel:
    """Encoder plus decoder with stable parameter naming."""

    def __init__(self, kind="hawkes-gat", num_nodes=1, d_in=1, hidden=64, num_layers=2,
                 dropout=0.1, use_bn=False, seed=0):
        rng = np.random.default_rng(seed)
        self.num_nodes = num_nodes
        self.d_in = d_in
        self.encoder = Encoder(kind, d_in, hidden, num_layers, num_nodes, rng, dropout, use_bn)
        self.decoder = LinkDecoder(hidden, rng)

    @property
    def kind(self):
        return self.encoder.kind

    @property
    def parameters(self):
        return self.encoder.parameters + self.decoder.parameters

    def buffers(self) -> dict:
        out = {}
        for k, layer in enumerate(self.encoder.layers):
            bn = getattr(layer, "bn", None)
            if bn is not None:
                out[f"enc.{k}.bn.mean"] = bn.running_mean
                out[f"enc.{k}.bn.var"] = bn.running_var
        return out

    def load_buffers(self, arrays: dict):
        for k, layer in enumerate(self.encoder.layers):
            bn = getattr(layer, "bn", None)
            if bn is not None:
                bn.running_mean = arrays[f"enc.{k}.bn.mean"].copy()
                bn.running_var = arrays[f"enc.{k}.bn.var"].copy()

    def features(self, num_rows) -> Tensor:
        return Tensor(np.ones((num_rows, self.d_in)))

    def embed(self, ctx, training=False, rng=None) -> Tensor:
        n = ctx.num_nodes
        return self.encoder.forward(self.features(n), ctx, training, rng)
