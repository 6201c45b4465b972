"""End-to-end acceptance criteria.

Each test prints one ``PASS``/``FAIL``/``BLOCKED`` line, repeated in the
terminal summary.  The UCI run needs the raw edge list at ``$TEMPFUSE_UCI``.
"""
import os
import time
from functools import lru_cache

import numpy as np
import pytest

from conftest import ACCEPTANCE
from tempfuse.bench import fuse_grows_linearly, minibatch_saves_memory, run_bench
from tempfuse.config import BenchConfig
from tempfuse.datasets import load_dataset, pregenerate_eval_negatives, synthetic_dynamic_graph
from tempfuse.training import RunConfig, Trainer, mrr
from tempfuse.verify import (check_batch_equivalence, check_delta_zero_collapse,
                             check_laplacian_identity, check_mrr_arithmetic,
                             check_model_gradients)

SEEDS = (0, 1, 2)


def report(name, ok, detail, status=None):
    line = f"{status or ('PASS' if ok else 'FAIL'):<8} {name:<28} {detail}"
    ACCEPTANCE.append(line)
    print(line)


def _check(name, result, budget):
    ok = result.passed and result.seconds < budget
    report(name, ok, f"max_err={result.max_error:.2e} tol={result.tolerance:.0e} "
                     f"n={result.instances} {result.seconds:.1f}s (budget {budget}s) "
                     f"{result.detail}".rstrip())
    assert result.passed, result.line()
    assert result.seconds < budget


def test_laplacian_identity():
    _check("laplacian_identity", check_laplacian_identity(instances=200, tol=1e-9), 10)


def test_gradient_soundness():
    _check("gradient_soundness", check_model_gradients(instances=20, tol=1e-4), 60)


def test_delta_zero_collapse():
    _check("delta0_collapse", check_delta_zero_collapse(instances=50, tol=1e-12), 60)


def test_minibatch_equivalence():
    r = check_batch_equivalence(num_nodes=500, tol_embed=1e-5, tol_params=1e-6)
    _check("minibatch_equivalence", r, 120)


def test_mrr_arithmetic():
    examples = (mrr([0.9], [[0.1] * 100]), mrr([0.0], [[0.5] * 100]),
                mrr([0.5], [[0.5] * 100]))
    exact = examples == (1.0, 1 / 101, 1 / 51)
    r = check_mrr_arithmetic(instances=1000, tol=1e-12)
    ok = exact and r.passed
    report("mrr_arithmetic", ok, f"examples exact={exact} brute-force max_err={r.max_error:.1e} "
                                 f"n={r.instances}")
    assert ok


@lru_cache(maxsize=None)
def _fixture():
    data = synthetic_dynamic_graph(num_nodes=200, base_pairs=600, delta_true=0.5,
                                   num_steps=20, seed=7)
    negs = {s: pregenerate_eval_negatives([data.snapshots[i] for i in data.target_indices(s)],
                                          data.num_nodes, 100, seed=0)
            for s in ("val", "test")}
    return data, negs


@lru_cache(maxsize=None)
def _test_mrr(model, seed, k_train=1):
    data, negs = _fixture()
    trainer = Trainer(RunConfig(model=model, seed=seed, k_train=k_train), data)
    trainer.fit(val_negatives=negs["val"])
    return trainer.evaluate("test", negs["test"])


def test_ablation_trend():
    t0 = time.perf_counter()
    gat = np.mean([_test_mrr("gat", s) for s in SEEDS])
    hawkes = np.mean([_test_mrr("hawkes-gat", s) for s in SEEDS])
    seconds = time.perf_counter() - t0
    ratio = hawkes / gat
    ok = ratio >= 1.5 and seconds < 15 * 60
    report("ablation_trend", ok, f"hawkes-gat {100 * hawkes:.2f} vs gat {100 * gat:.2f} "
                                 f"MRR@100, ratio {ratio:.2f} (need >= 1.5), {seconds:.0f}s")
    assert ok


def test_negative_sample_insensitivity():
    means = {k: np.mean([_test_mrr("hawkes-gat", s, k) for s in SEEDS]) for k in (1, 2, 4)}
    vals = np.array(list(means.values()))
    spread = (vals.max() - vals.min()) / vals.mean()
    ok = spread < 0.15
    shown = ", ".join(f"k={k}: {100 * v:.2f}" for k, v in means.items())
    report("negative_insensitivity", ok, f"{shown}; relative spread {100 * spread:.1f}% "
                                         f"(need < 15%)")
    assert ok


def test_bench_memory_direction():
    rows = run_bench(BenchConfig(num_nodes=100_000))
    big = rows[-1]
    linear, memory = fuse_grows_linearly(rows), minibatch_saves_memory(rows)
    ok = linear and memory
    report("bench_direction", ok, f"n=1e5 w={big.w}: mini-batch peak {big.mini_peak_mb:.1f} MB "
                                  f"vs full {big.full_peak_mb:.1f} MB; fuse linear in w={linear}")
    assert ok


def test_uci_soft_target():
    path = os.environ.get("TEMPFUSE_UCI")
    if not path or not os.path.exists(path):
        report("uci_soft_target", False, "raw UCI edge list not available (set TEMPFUSE_UCI)",
               status="BLOCKED")
        pytest.skip("UCI data not available")
    t0 = time.perf_counter()
    data = load_dataset(path, 50, (35, 5, 10), name="uci")
    negs = {s: pregenerate_eval_negatives([data.snapshots[i] for i in data.target_indices(s)],
                                          data.num_nodes, 100, seed=0)
            for s in ("val", "test")}
    scores = []
    for seed in SEEDS:
        trainer = Trainer(RunConfig(model="hawkes-gat", seed=seed), data)
        trainer.fit(val_negatives=negs["val"])
        scores.append(trainer.evaluate("test", negs["test"]))
    mean, std = 100 * np.mean(scores), 100 * np.std(scores, ddof=1)
    seconds = time.perf_counter() - t0
    ok = mean >= 25 and seconds < 2 * 3600
    report("uci_soft_target", ok, f"MRR@100 {mean:.2f} +- {std:.2f} over {len(SEEDS)} seeds "
                                  f"(need >= 25), {seconds:.0f}s")
    assert ok
