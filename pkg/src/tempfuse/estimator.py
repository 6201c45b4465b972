"""scikit-learn style front end: ``SnapshotFuser`` and ``HawkesLinkPredictor``."""
from __future__ import annotations

from dataclasses import fields

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .datasets import DynamicGraph, EvalNegatives
from .graph import TemporalGraph, fuse
from .training import RunConfig, Trainer, evaluate_mrr
from .validation import check_dynamic_graph, check_pairs, check_snapshots


class SnapshotFuser(TransformerMixin, BaseEstimator):
    """Fuse a window of snapshots into one ``TemporalGraph``.

    ``window_end`` defaults to one past the last snapshot index.  Stateless;
    ``fit`` only validates.
    """

    def __init__(self, symmetrize=True, time_mode="exact", window_end=None):
        self.symmetrize = symmetrize
        self.time_mode = time_mode
        self.window_end = window_end

    def fit(self, X, y=None):
        check_snapshots(X)
        return self

    def transform(self, X) -> TemporalGraph:
        snaps = check_snapshots(X)
        end = snaps[-1].index + 1 if self.window_end is None else self.window_end
        return fuse(snaps, float(end), self.symmetrize, self.time_mode)


class HawkesLinkPredictor(BaseEstimator):
    """Future-link predictor over a discrete-time dynamic graph.

    ``fit`` trains on the train split of a ``DynamicGraph`` with early stopping
    on validation MRR@``k_eval``; ``transform`` returns node embeddings for a
    history window, ``predict_proba`` link probabilities, ``score`` the MRR.

    Parameters mirror ``RunConfig``; ``model`` is one of ``hawkes-gat``,
    ``hawkes-gcn``, ``gat`` or ``gcn``.
    """

    def __init__(self, model="hawkes-gat", window=9, hidden=64, layers=2, dropout=0.1,
                 lr=0.001, patience=20, max_epochs=100, t_max=100, k_train=1, k_eval=100,
                 minibatch=False, batch_size=1024, fanout=-1, seed=0, symmetrize=True,
                 time_mode="exact", truncate_window=True, resample_negatives=True,
                 use_bn=False, in_dim=1):
        self.model = model
        self.window = window
        self.hidden = hidden
        self.layers = layers
        self.dropout = dropout
        self.lr = lr
        self.patience = patience
        self.max_epochs = max_epochs
        self.t_max = t_max
        self.k_train = k_train
        self.k_eval = k_eval
        self.minibatch = minibatch
        self.batch_size = batch_size
        self.fanout = fanout
        self.seed = seed
        self.symmetrize = symmetrize
        self.time_mode = time_mode
        self.truncate_window = truncate_window
        self.resample_negatives = resample_negatives
        self.use_bn = use_bn
        self.in_dim = in_dim

    def run_config(self) -> RunConfig:
        names = {f.name for f in fields(RunConfig)}
        return RunConfig(**{k: v for k, v in self.get_params().items() if k in names})

    def fit(self, X: DynamicGraph, y=None, val_negatives: EvalNegatives = None, log=None,
            checkpoint_dir=None):
        X = check_dynamic_graph(X)
        self.trainer_ = Trainer(self.run_config(), X)
        self.trainer_.fit(val_negatives=val_negatives, log=log, checkpoint_dir=checkpoint_dir)
        self.model_ = self.trainer_.model
        self.history_ = self.trainer_.history
        self.best_epoch_ = self.trainer_.best_epoch
        self.n_nodes_ = X.num_nodes
        return self

    def _context(self, history, window_end=None):
        snaps = check_snapshots(history, self.n_nodes_)[-self.window:]
        end = snaps[-1].index + 1 if window_end is None else window_end
        g = fuse(snaps, float(end), self.symmetrize, self.time_mode)
        return self.model_.encoder.context(g)

    def transform(self, history, window_end=None) -> np.ndarray:
        """Embeddings of every node given the most recent ``window`` snapshots."""
        check_is_fitted(self, "model_")
        return self.model_.embed(self._context(history, window_end)).value.copy()

    def predict_proba(self, pairs, history, window_end=None) -> np.ndarray:
        check_is_fitted(self, "model_")
        pairs = check_pairs(pairs, self.n_nodes_)
        H = self.model_.embed(self._context(history, window_end))
        return self.model_.decoder.forward(H, pairs[:, 0], pairs[:, 1]).value[:, 0]

    def predict(self, pairs, history, window_end=None, threshold=0.5) -> np.ndarray:
        return (self.predict_proba(pairs, history, window_end) >= threshold).astype(np.int64)

    def score(self, X: DynamicGraph, y=None, split="test", negatives: EvalNegatives = None):
        """Mean reciprocal rank against ``k_eval`` fixed negatives per positive."""
        check_is_fitted(self, "model_")
        X = check_dynamic_graph(X)
        trainer = self.trainer_ if X is self.trainer_.data else Trainer(self.run_config(), X,
                                                                         self.model_)
        return evaluate_mrr(trainer, split, negatives)
