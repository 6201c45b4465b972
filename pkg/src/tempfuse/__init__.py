"""Snapshot fusion and time-decayed graph networks for future link prediction."""
from .datasets import (DynamicGraph, SplitSpec, bin_snapshots, load_dataset, parse_edge_list,
                       pregenerate_eval_negatives, synthetic_dynamic_graph, time_split)
from .estimator import HawkesLinkPredictor, SnapshotFuser
from .graph import Snapshot, TemporalGraph, build_snapshot, fuse
from .hawkes import excitation_matrix, hawkes_laplacian
from .models import LinkPredictionModel
from .training import RunConfig, Trainer, evaluate_mrr, train_full_batch, train_mini_batch

__all__ = [
    "DynamicGraph", "SplitSpec", "bin_snapshots", "load_dataset", "parse_edge_list",
    "pregenerate_eval_negatives", "synthetic_dynamic_graph", "time_split",
    "HawkesLinkPredictor", "SnapshotFuser", "Snapshot", "TemporalGraph", "build_snapshot",
    "fuse", "excitation_matrix", "hawkes_laplacian", "LinkPredictionModel", "RunConfig",
    "Trainer", "evaluate_mrr", "train_full_batch", "train_mini_batch",
]
