"""Hawkes excitation weights and the time-decayed graph Laplacian."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import TemporalGraph


def decay_weight(delta: float, t_prime: float, tau: float) -> float:
    """Exponential excitation ``exp(-delta * (t_prime - tau))`` of one past event."""
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    if not tau < t_prime:
        raise ValueError(f"event time {tau} is not before t'={t_prime}")
    return float(np.exp(-delta * (t_prime - tau)))


def decay_weights(delta, age) -> np.ndarray:
    """Vectorized decay for event ages ``t' - tau``; old events underflow to 0."""
    with np.errstate(under="ignore"):
        return np.exp(-np.asarray(delta, dtype=np.float64) * np.asarray(age, dtype=np.float64))


@dataclass(frozen=True)
class ExcitationMatrix:
    """Sparse n x n matrix of summed decay weights per node pair."""

    num_nodes: int
    row: np.ndarray
    col: np.ndarray
    values: np.ndarray
    delta_mode: str
    t_prime: float

    def tocsr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, (self.row, self.col)),
                             shape=(self.num_nodes, self.num_nodes))

    def toarray(self) -> np.ndarray:
        return self.tocsr().toarray()

    def is_symmetric(self, rtol=1e-12) -> bool:
        m = self.tocsr()
        diff = abs(m - m.T)
        scale = max(1.0, abs(m).max() if m.nnz else 0.0)
        return diff.nnz == 0 or diff.max() <= rtol * scale


def excitation_matrix(g: TemporalGraph, delta) -> ExcitationMatrix:
    """Sum ``exp(-delta_i (t' - tau))`` over the parallel edges of every pair.

    ``delta`` is a scalar or a per-source-node vector of length ``num_nodes``.
    """
    delta = np.asarray(delta, dtype=np.float64)
    if np.any(delta < 0):
        raise ValueError("delta must be non-negative")
    if delta.ndim == 0:
        mode, per_edge = "scalar", delta
    elif delta.shape == (g.num_nodes,):
        mode, per_edge = "per-source-node", delta[g.src]
    else:
        raise ValueError(f"delta must be a scalar or have shape ({g.num_nodes},)")
    age = g.window_end - g.tau
    if np.any(age <= 0):
        raise ValueError("temporal edge not strictly before window_end")
    w = decay_weights(per_edge, age)
    c = g.csr
    vals = np.bincount(c.edge_pair, weights=w, minlength=c.num_pairs)
    return ExcitationMatrix(g.num_nodes, c.pair_src.copy(), c.pair_dst.copy(), vals, mode,
                            g.window_end)


def multiplicity_matrix(g: TemporalGraph) -> sp.csr_matrix:
    ones = np.ones(g.num_edges)
    return sp.csr_matrix((ones, (g.src, g.dst)), shape=(g.num_nodes, g.num_nodes))


def hawkes_laplacian(c: ExcitationMatrix) -> sp.csr_matrix:
    """``diag(row sums of C) - C``; rejects asymmetric ``C``."""
    if not c.is_symmetric():
        raise ValueError("Hawkes Laplacian requires a symmetric excitation matrix")
    m = c.tocsr()
    deg = np.asarray(m.sum(axis=1)).ravel()
    return (sp.diags(deg) - m).tocsr()


@dataclass
class DenoisingProblem:
    S: np.ndarray
    F: np.ndarray
    L: object
    lam: float = 1.0


def denoising_objective(p: DenoisingProblem) -> float:
    """``||F - S||_F^2 + lam * tr(F^T L F)``."""
    S = np.atleast_2d(np.asarray(p.S, dtype=np.float64))
    F = np.atleast_2d(np.asarray(p.F, dtype=np.float64))
    if S.shape != F.shape:
        raise ValueError(f"S has shape {S.shape} but F has shape {F.shape}")
    if p.L.shape != (F.shape[0], F.shape[0]):
        raise ValueError(f"L has shape {p.L.shape}, expected {(F.shape[0],) * 2}")
    if p.lam < 0:
        raise ValueError("lam must be non-negative")
    fidelity = float(np.sum((F - S) ** 2))
    return fidelity + p.lam * laplacian_quadratic(p.L, F)


def laplacian_quadratic(L, F) -> float:
    F = np.asarray(F, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    return float(np.sum(F * (L @ F)))


def pairwise_decay_sum(F, g: TemporalGraph, delta) -> float:
    """Sum of ``exp(-delta (t' - tau)) * ||F_i - F_j||^2`` over temporal edges.

    On a symmetrized graph every event is stored twice, so each undirected
    pair is counted once by halving the total.
    """
    F = np.asarray(F, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    if F.shape[0] != g.num_nodes:
        raise ValueError(f"F has {F.shape[0]} rows, graph has {g.num_nodes} nodes")
    delta = np.asarray(delta, dtype=np.float64)
    d = delta if delta.ndim == 0 else delta[g.src]
    w = np.exp(-d * (g.window_end - g.tau))
    total = float(np.sum(w * np.sum((F[g.src] - F[g.dst]) ** 2, axis=1)))
    return 0.5 * total if g.symmetrized else total
