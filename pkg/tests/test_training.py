import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tempfuse.datasets import DynamicGraph, SplitSpec, synthetic_dynamic_graph
from tempfuse.graph import build_snapshot
from tempfuse.training import (RunConfig, Trainer, early_stopping, mrr, reciprocal_ranks,
                               train_full_batch)


@pytest.fixture(scope="module")
def data():
    return synthetic_dynamic_graph(num_nodes=60, base_pairs=150, num_steps=12, seed=7,
                                   split=(8, 2, 2))


def _cfg(**kw):
    base = dict(model="hawkes-gcn", window=3, hidden=8, layers=2, dropout=0.0, lr=0.01,
                max_epochs=3, t_max=3, k_eval=20, seed=0)
    base.update(kw)
    return RunConfig(**base)


def _params(trainer):
    return {p.name: p.value.copy() for p in trainer.model.parameters}


def test_mrr_examples():
    assert mrr([0.9], [[0.1] * 100]) == 1.0
    assert mrr([0.0], [[0.5] * 100]) == pytest.approx(1 / 101)
    # ties everywhere: optimistic rank 1, pessimistic rank 101
    assert mrr([0.5], [[0.5] * 100]) == pytest.approx(1 / 51)


def test_reciprocal_ranks_reject_bad_shapes():
    with pytest.raises(ValueError):
        reciprocal_ranks([0.1, 0.2], [[0.3]])
    with pytest.raises(ValueError):
        reciprocal_ranks([0.1], np.zeros((1, 0)))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 20), st.integers(1, 30), st.integers(0, 2**31))
def test_mrr_bounds(p, k, seed):
    rng = np.random.default_rng(seed)
    value = mrr(rng.integers(0, 3, p), rng.integers(0, 3, (p, k)))
    assert 1 / (k + 1) <= value <= 1.0


def test_early_stopping_examples():
    assert early_stopping([0.5] * 21, 20) == (True, 1)
    assert early_stopping([0.5] * 20, 20) == (False, 1)
    assert early_stopping(list(range(50)), 20) == (False, 50)
    assert early_stopping([0.1, 0.3, 0.2] + [0.3] * 20, 20) == (True, 2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=60), st.integers(1, 10))
def test_early_stopping_matches_scalar_replay(history, patience):
    best, best_epoch, wait, stopped = -1.0, 0, 0, None
    for e, v in enumerate(history, 1):
        if v > best:
            best, best_epoch, wait = v, e, 0
        else:
            wait += 1
    stopped = wait >= patience
    assert early_stopping(history, patience) == (stopped, best_epoch)


def test_one_target_one_epoch_is_one_step():
    snaps = [build_snapshot([(0, 1, k + 0.5), (1, 2, k + 0.6)], 4, k) for k in range(4)]
    data = DynamicGraph(snaps, 4, SplitSpec(2, 1, 1))
    t = Trainer(_cfg(window=1, max_epochs=1), data)
    assert t.train_targets() == [1]
    t.run_epoch(1)
    assert t.steps == 1


def test_zero_learning_rate_freezes_parameters(data):
    t = Trainer(_cfg(lr=0.0, resample_negatives=False), data)
    before = _params(t)
    losses = [t.run_epoch(e) for e in (1, 2, 3)]
    after = _params(t)
    assert all(np.array_equal(before[k], after[k]) for k in before)
    assert losses[0] == losses[1] == losses[2]


def test_hawkes_gat_loss_decreases_on_seed_seven_fixture():
    t = Trainer(RunConfig(model="hawkes-gat", seed=0), synthetic_dynamic_graph(seed=7))
    losses = [t.run_epoch(e) for e in range(1, 6)]
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_single_minibatch_matches_full_batch(data):
    full = Trainer(_cfg(model="hawkes-gat"), data)
    mini = Trainer(_cfg(model="hawkes-gat", minibatch=True, batch_size=10_000), data)
    for e in (1, 2):
        assert mini.run_epoch(e) == pytest.approx(full.run_epoch(e), abs=1e-4)
    assert mini.steps == full.steps


def test_minibatch_parameter_trajectory_matches_full_batch(data):
    full = Trainer(_cfg(model="hawkes-gat"), data)
    mini = Trainer(_cfg(model="hawkes-gat", minibatch=True, batch_size=10_000), data)
    full.run_epoch(1, max_steps=3)
    mini.run_epoch(1, max_steps=3)
    assert full.steps == mini.steps == 3
    for k, v in _params(full).items():
        np.testing.assert_allclose(_params(mini)[k], v, rtol=0, atol=1e-6)


def test_batch_size_one_steps_once_per_labeled_edge(data):
    t = Trainer(_cfg(minibatch=True, batch_size=1, fanout=2), data)
    expected = sum(len(t.labeled_targets(i, 1)) for i in t.train_targets())
    t.run_epoch(1)
    assert t.steps == expected


def test_interrupted_run_resumes_identically(data, tmp_path):
    cfg = _cfg(model="hawkes-gat", dropout=0.2, minibatch=True, batch_size=16, fanout=3)
    straight = Trainer(cfg, data).fit()
    first = Trainer(cfg, data).fit(max_steps=7)
    first.save_state(tmp_path / "mid.ckpt")
    resumed = Trainer(cfg, data).load_state(tmp_path / "mid.ckpt").fit()
    assert resumed.val_history == straight.val_history
    assert [r.loss for r in resumed.history] == pytest.approx(
        [r.loss for r in straight.history], nan_ok=True)
    for k, v in _params(straight).items():
        np.testing.assert_array_equal(_params(resumed)[k], v)


def test_evaluation_is_pure(data):
    t = train_full_batch(_cfg(max_epochs=1), data)
    before = _params(t)
    a, b = t.evaluate("val"), t.evaluate("val")
    assert a == b and 0 < a <= 1
    assert all(np.array_equal(v, _params(t)[k]) for k, v in before.items())


def test_window_is_causal(data):
    t = Trainer(_cfg(window=3), data)
    for i in range(1, 12):
        g = t.window_graph(i)
        assert g.tau.max(initial=-1) < i
        assert set(g.snap.tolist()) <= set(range(max(0, i - 3), i))
    # changing a target snapshot must not change the scores used to rank it
    snaps = list(data.snapshots)
    snaps[10] = build_snapshot([(0, 1, 10.5)], data.num_nodes, 10)
    other = Trainer(_cfg(window=3), DynamicGraph(snaps, data.num_nodes, data.split))
    assert np.array_equal(t.window_graph(10).tau, other.window_graph(10).tau)


def test_training_is_deterministic(data):
    a = train_full_batch(_cfg(dropout=0.3, max_epochs=2), data)
    b = train_full_batch(_cfg(dropout=0.3, max_epochs=2), data)
    assert a.val_history == b.val_history


def test_run_config_validation():
    with pytest.raises(ValueError, match="unknown model"):
        RunConfig(model="gcnn")
    with pytest.raises(ValueError):
        RunConfig(window=0)
    with pytest.raises(ValueError):
        RunConfig(dropout=1.0)
