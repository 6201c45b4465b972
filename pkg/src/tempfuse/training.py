"""Sliding-window training (full-batch and mini-batch), early stopping, MRR."""
from __future__ import annotations

import json
import resource
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from ._rng import stream_rng
from .datasets import DynamicGraph, EvalNegatives, pregenerate_eval_negatives, unique_positives
from .graph import binary_degrees, fuse
from .models import MODEL_NAMES, LinkPredictionModel
from .optim import (OptimizerState, adam_step, cosine_anneal_lr, load_arrays, optimizer_arrays,
                    restore_optimizer, save_arrays)
from .sampling import LabeledEdges, link_neighbor_batches, sample_negatives


@dataclass
class RunConfig:
    model: str = "hawkes-gat"
    window: int = 9
    hidden: int = 64
    layers: int = 2
    dropout: float = 0.1
    lr: float = 0.001
    patience: int = 20
    max_epochs: int = 100
    t_max: int = 100
    k_train: int = 1
    k_eval: int = 100
    minibatch: bool = False
    batch_size: int = 1024
    fanout: int = -1
    seed: int = 0
    symmetrize: bool = True
    time_mode: str = "exact"
    truncate_window: bool = True
    resample_negatives: bool = True
    use_bn: bool = False
    in_dim: int = 1

    def __post_init__(self):
        if self.model not in MODEL_NAMES:
            raise ValueError(f"unknown model {self.model!r}; choose from {MODEL_NAMES}")
        for name in ("window", "hidden", "layers", "k_train", "k_eval", "batch_size",
                     "max_epochs", "t_max", "in_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr < 0 or self.patience < 1:
            raise ValueError("lr must be non-negative and patience positive")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def fanouts(self):
        return None if self.fanout is None or self.fanout < 0 else self.fanout

    @classmethod
    def from_dict(cls, d: dict):
        known = {f.name: f for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class MetricsRecord:
    epoch: int
    split: str
    loss: float
    mrr_at_100: float
    wall_time: float
    peak_memory_estimate: float

    def to_json(self) -> str:
        def num(v):
            return None if v is None or not np.isfinite(v) else float(v)
        return json.dumps({"epoch": self.epoch, "split": self.split, "loss": num(self.loss),
                           "mrr100": num(self.mrr_at_100), "seconds": num(self.wall_time),
                           "peak_rss_mb": num(self.peak_memory_estimate)})


def peak_rss_mb() -> float:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


def reciprocal_ranks(pos_scores, neg_scores) -> np.ndarray:
    """Average of optimistic and pessimistic rank of each positive among its negatives."""
    pos = np.asarray(pos_scores, dtype=np.float64).reshape(-1, 1)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if neg.ndim != 2 or neg.shape[0] != pos.shape[0]:
        raise ValueError(f"need one row of negatives per positive, got {neg.shape} for "
                         f"{pos.shape[0]} positives")
    if neg.shape[1] == 0:
        raise ValueError("positive without negatives")
    optimistic = 1 + np.sum(neg > pos, axis=1)
    pessimistic = 1 + np.sum(neg >= pos, axis=1)
    return 2.0 / (optimistic + pessimistic)


def mrr(pos_scores, neg_scores) -> float:
    return float(np.mean(reciprocal_ranks(pos_scores, neg_scores)))


def early_stopping(history, patience: int):
    """Return ``(stop, best_epoch)`` for a validation-MRR history (1-indexed).

    Stops once ``patience`` epochs in a row failed to strictly beat the best.
    """
    best, best_epoch, since = -np.inf, 0, 0
    for epoch, value in enumerate(history, start=1):
        if value > best:
            best, best_epoch, since = value, epoch, 0
        else:
            since += 1
    return since >= patience, best_epoch


class Trainer:
    """Drives one model over a ``DynamicGraph`` with a sliding input window.

    Each target snapshot ``i`` is predicted from the fused window
    ``[i - window, i - 1]``; one epoch visits every training target once.
    """

    def __init__(self, cfg: RunConfig, data: DynamicGraph, model: LinkPredictionModel = None):
        self.cfg = cfg
        self.data = data
        self.model = model or LinkPredictionModel(
            cfg.model, data.num_nodes, cfg.in_dim, cfg.hidden, cfg.layers, cfg.dropout,
            cfg.use_bn, seed=stream_rng(cfg.seed, "init"))
        self.opt = OptimizerState(base_lr=cfg.lr)
        self.history: list[MetricsRecord] = []
        self.val_history: list[float] = []
        self.best_state = None
        self.best_epoch = 0
        self.steps = 0
        self._graphs = {}
        self._contexts = {}
        self._position = (1, 0, 0)  # epoch, target position, batch position
        self._epoch_losses: list[float] = []
        self._epoch_start = None

    # -- windows -------------------------------------------------------
    def window_graph(self, i: int):
        if i not in self._graphs:
            lo = i - self.cfg.window
            if lo < 0 and not self.cfg.truncate_window:
                self._graphs[i] = None
            else:
                snaps = self.data.snapshots[max(0, lo):i]
                self._graphs[i] = fuse(snaps, float(i), self.cfg.symmetrize,
                                       self.cfg.time_mode) if snaps else None
        return self._graphs[i]

    def context(self, i: int):
        if i not in self._contexts:
            g = self.window_graph(i)
            self._contexts[i] = None if g is None else self.model.encoder.context(g)
        return self._contexts[i]

    def train_targets(self) -> list[int]:
        return [i for i in self.data.target_indices("train")
                if self.window_graph(i) is not None and self.data.snapshots[i].num_edges]

    def labeled_targets(self, i: int, epoch: int) -> LabeledEdges:
        pos = unique_positives(self.data.snapshots[i])
        key = epoch if self.cfg.resample_negatives else 0
        neg = sample_negatives(pos, self.data.num_nodes, self.cfg.k_train,
                               stream_rng(self.cfg.seed, "negatives", key, i))
        return LabeledEdges.from_positives_and_negatives(pos, neg)

    # -- steps ---------------------------------------------------------
    def _step(self, ctx, src, dst, labels, rng, lr) -> float:
        model = self.model
        H = model.embed(ctx, training=True, rng=rng)
        loss = ad.bce_with_logits(model.decoder.logits(H, src, dst), labels)
        if not np.isfinite(loss.value[0, 0]):
            raise FloatingPointError("loss is not finite")
        ad.backward(loss)
        adam_step(model.parameters, self.opt, lr)
        self.steps += 1
        return float(loss.value[0, 0])

    def target_batches(self, i: int, epoch: int):
        """Yield one ``(context, src, dst, labels, dropout_rng)`` per optimizer step."""
        cfg = self.cfg
        labeled = self.labeled_targets(i, epoch)
        if not cfg.minibatch:
            yield (self.context(i), labeled.src, labeled.dst, labeled.label,
                   stream_rng(cfg.seed, "dropout", epoch, i, 0))
            return
        g = self.window_graph(i)
        deg = binary_degrees(g).values
        batches = link_neighbor_batches(g, labeled, cfg.batch_size, cfg.fanouts, cfg.layers,
                                        seed=stream_rng(cfg.seed, "loader", epoch, i),
                                        degrees=deg)
        for b_idx, b in enumerate(batches):
            ctx = self.model.encoder.context(b.graph, b.degrees, b.global_nodes)
            yield (ctx, b.edge_label_index[0], b.edge_label_index[1], b.edge_label,
                   stream_rng(cfg.seed, "dropout", epoch, i, b_idx))

    def lr_at(self, epoch: int) -> float:
        return cosine_anneal_lr(self.cfg.lr, min(epoch - 1, self.cfg.t_max), self.cfg.t_max)

    def run_epoch(self, epoch: int, max_steps=None) -> float | None:
        """Train one epoch; returns its mean loss, or None when interrupted."""
        lr = self.lr_at(epoch)
        targets = self.train_targets()
        _, t_pos, b_pos = self._position if self._position[0] == epoch else (epoch, 0, 0)
        if (t_pos, b_pos) == (0, 0):
            self._epoch_losses = []
            self._epoch_start = time.perf_counter()
        for tp in range(t_pos, len(targets)):
            i = targets[tp]
            for b_idx, (ctx, src, dst, y, rng) in enumerate(self.target_batches(i, epoch)):
                if tp == t_pos and b_idx < b_pos:
                    continue
                if max_steps is not None and self.steps >= max_steps:
                    self._position = (epoch, tp, b_idx)
                    return None
                self._epoch_losses.append(self._step(ctx, src, dst, y, rng, lr))
            b_pos = 0
        self._position = (epoch + 1, 0, 0)
        return float(np.mean(self._epoch_losses)) if self._epoch_losses else float("nan")

    # -- evaluation ----------------------------------------------------
    def negatives_for(self, split: str) -> EvalNegatives:
        idx = self.data.target_indices(split)
        snaps = [self.data.snapshots[i] for i in idx]
        return pregenerate_eval_negatives(snaps, self.data.num_nodes, self.cfg.k_eval,
                                          seed=self.cfg.seed)

    def evaluate(self, split: str, negatives: EvalNegatives = None) -> float:
        return evaluate_mrr(self, split, negatives)

    # -- full loop -----------------------------------------------------
    def fit(self, val_negatives: EvalNegatives = None, max_steps=None, log=None,
            checkpoint_dir=None):
        cfg = self.cfg
        if val_negatives is None:
            val_negatives = self.negatives_for("val")
        epoch = self._position[0]
        while epoch <= cfg.max_epochs:
            loss = self.run_epoch(epoch, max_steps)
            if loss is None:
                return self
            seconds = time.perf_counter() - self._epoch_start
            self.history.append(MetricsRecord(epoch, "train", loss, float("nan"), seconds,
                                              peak_rss_mb()))
            t0 = time.perf_counter()
            val = self.evaluate("val", val_negatives)
            self.val_history.append(val)
            self.history.append(MetricsRecord(epoch, "val", float("nan"), val,
                                              time.perf_counter() - t0, peak_rss_mb()))
            if log is not None:
                for rec in self.history[-2:]:
                    log(rec)
            stop, best = early_stopping(self.val_history, cfg.patience)
            if best == epoch:
                self.best_epoch = epoch
                self.best_state = self.state_arrays()
            if checkpoint_dir is not None:
                Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
                self.save_state(Path(checkpoint_dir) / "last.ckpt")
            epoch += 1
            if stop:
                break
        if self.best_state is not None:
            self.load_state_arrays(self.best_state)
        return self

    # -- state ---------------------------------------------------------
    def state_arrays(self) -> dict:
        arrays = {p.name: p.value.copy() for p in self.model.parameters}
        arrays.update({k: v.copy() for k, v in self.model.buffers().items()})
        arrays.update({k: v.copy() for k, v in optimizer_arrays(self.opt).items()})
        return arrays

    def load_state_arrays(self, arrays: dict):
        for p in self.model.parameters:
            p.value = arrays[p.name].copy()
            p.zero_grad()
        self.model.load_buffers(arrays)
        if "adam.step" in arrays:
            restore_optimizer(self.opt, arrays)

    def save_state(self, path):
        path = Path(path)
        save_arrays(path, self.state_arrays())
        meta = {"position": list(self._position), "steps": self.steps,
                "epoch_losses": self._epoch_losses, "val_history": self.val_history,
                "best_epoch": self.best_epoch, "config": asdict(self.cfg),
                "history": [asdict(r) for r in self.history]}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta))

    def load_state(self, path):
        path = Path(path)
        self.load_state_arrays(load_arrays(path))
        meta_path = path.with_suffix(path.suffix + ".json")
        if meta_path.exists():
            meta = json.loads(meta_path.read_text())
            self._position = tuple(meta["position"])
            self.steps = meta["steps"]
            self._epoch_losses = meta["epoch_losses"]
            self.val_history = meta["val_history"]
            self.best_epoch = meta["best_epoch"]
            self.history = [MetricsRecord(**r) for r in meta["history"]]
            self._epoch_start = time.perf_counter()
        return self


def evaluate_mrr(trainer: Trainer, split: str, negatives: EvalNegatives = None) -> float:
    """MRR of each target snapshot's positives against fixed negatives.

    Scores come from a dropout-free forward pass on the fused window before
    the target; the mean runs over all positives of the split.
    """
    model = trainer.model
    if negatives is None:
        negatives = trainer.negatives_for(split)
    rr = []
    for i in trainer.data.target_indices(split):
        src, pos_dst, neg_dst = negatives.for_snapshot(i)
        expected = len(unique_positives(trainer.data.snapshots[i]))
        if len(src) != expected:
            raise ValueError(f"negatives cover {len(src)} of {expected} positives in snapshot {i}")
        if len(src) == 0:
            continue
        ctx = trainer.context(i)
        if ctx is None:
            continue
        H = model.embed(ctx, training=False)
        k = neg_dst.shape[1]
        pos = model.decoder.forward(H, src, pos_dst).value[:, 0]
        neg = model.decoder.forward(H, np.repeat(src, k), neg_dst.ravel()).value[:, 0]
        rr.append(reciprocal_ranks(pos, neg.reshape(-1, k)))
    if not rr:
        raise ValueError(f"split {split!r} has no evaluable positives")
    return float(np.mean(np.concatenate(rr)))


def train_full_batch(cfg: RunConfig, data: DynamicGraph, **kw) -> Trainer:
    cfg = RunConfig.from_dict({**asdict(cfg), "minibatch": False})
    return Trainer(cfg, data).fit(**kw)


def train_mini_batch(cfg: RunConfig, data: DynamicGraph, **kw) -> Trainer:
    cfg = RunConfig.from_dict({**asdict(cfg), "minibatch": True})
    return Trainer(cfg, data).fit(**kw)
