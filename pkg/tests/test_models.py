import numpy as np
import pytest

from conftest import random_snapshots
from tempfuse import autodiff as ad
from tempfuse.autodiff import Tensor
from tempfuse.graph import binary_degrees, build_snapshot, collapse_parallel, fuse
from tempfuse.hawkes import excitation_matrix
from tempfuse.models import (GatLayer, GcnLayer, GraphContext, HawkesGatLayer, HawkesGcnLayer,
                             LinkDecoder, LinkPredictionModel, PlainContext, decode,
                             hawkes_gat_forward, hawkes_gcn_forward, plain_gat_forward,
                             plain_gcn_forward)
from tempfuse.verify import gradient_instance, numeric_gradient, relative_error


def _identity_gcn(d, n, rng):
    layer = HawkesGcnLayer(d, d, n, rng)
    layer.W.value = np.eye(d)
    layer.W_root.value = np.zeros((d, d))
    layer.delta_raw.value = np.full((n, 1), -np.inf)  # softplus -> exactly 0
    return layer


def test_hawkes_gcn_single_edge_unit_coefficient(rng):
    g = fuse([build_snapshot([(0, 1, 0.5)], 2, 0)], 1.0)
    H = rng.normal(size=(2, 3))
    out = hawkes_gcn_forward(_identity_gcn(3, 2, rng), H, g).value
    np.testing.assert_allclose(out[0], H[1])


def test_hawkes_gcn_parallel_edges_double_message(rng):
    g = fuse([build_snapshot([(0, 1, 0.2), (0, 1, 0.6)], 2, 0)], 1.0)
    H = rng.normal(size=(2, 3))
    out = hawkes_gcn_forward(_identity_gcn(3, 2, rng), H, g).value
    np.testing.assert_allclose(out[0], 2 * H[1])


def test_hawkes_gcn_matches_dense_oracle(rng):
    n, d = 12, 4
    g = fuse(random_snapshots(rng, n, 3, 15), 3.0)
    layer = HawkesGcnLayer(d, 5, n, rng)
    layer.delta_raw.value = rng.normal(size=(n, 1))
    H = rng.normal(size=(n, d))
    delta = np.logaddexp(0, layer.delta_raw.value[:, 0])
    C = excitation_matrix(g, delta).toarray()
    deg = np.maximum(binary_degrees(g).values, 1).astype(float)
    Dm = np.diag(deg ** -0.5)
    dense = Dm @ C @ Dm @ H @ layer.W.value + H @ layer.W_root.value
    np.testing.assert_allclose(hawkes_gcn_forward(layer, H, g).value, dense, atol=1e-10)


def test_hawkes_gcn_delta_nonnegative(rng):
    layer = HawkesGcnLayer(2, 2, 5, rng)
    layer.delta_raw.value = rng.normal(scale=10, size=(5, 1))
    assert np.all(layer.delta() >= 0)
    assert np.allclose(HawkesGcnLayer(2, 2, 3, rng).delta(), np.log(2))


def _dense_hawkes_gat(layer, H, g):
    HW = H @ layer.W.value
    n = g.num_nodes
    pairs = sorted(set(zip(g.src.tolist(), g.dst.tolist())))
    score = {}
    for i, j in pairs:
        e = np.concatenate([HW[i], HW[j]]) @ layer.a.value[:, 0]
        score[i, j] = e if e > 0 else 0.2 * e
    table = {}
    for i in range(n):
        nb = [(i2, j) for i2, j in pairs if i2 == i]
        if nb:
            z = np.array([score[p] for p in nb])
            w = np.exp(z - z.max()) / np.exp(z - z.max()).sum()
            table.update(dict(zip(nb, w)))
    deg = np.maximum(binary_degrees(g).values, 1)
    out = H @ layer.W_root.value
    for i, j, tau, _ in g.temporal_edges:
        out[i] += np.exp(-table[i, j] * (g.window_end - tau)) / np.sqrt(deg[i] * deg[j]) * HW[j]
    return out, table


def test_hawkes_gat_matches_two_pass_oracle(rng):
    n, d = 12, 4
    g = fuse(random_snapshots(rng, n, 3, 15), 3.0)
    layer = HawkesGatLayer(d, 5, n, rng)
    H = rng.normal(size=(n, d))
    dense, _ = _dense_hawkes_gat(layer, H, g)
    np.testing.assert_allclose(hawkes_gat_forward(layer, H, g).value, dense, atol=1e-10)


def test_hawkes_gat_single_neighbor_rate_is_one(rng):
    g = fuse([build_snapshot([(0, 1, 0.5), (0, 1, 0.7)], 3, 0)], 1.0)
    layer = HawkesGatLayer(2, 2, 3, rng)
    layer.a.value = rng.normal(scale=5, size=(4, 1))
    ctx = GraphContext.build(g)
    att = layer.attention(Tensor(rng.normal(size=(3, 2))), ctx).value
    np.testing.assert_allclose(att, 1.0)


def test_hawkes_gat_zero_age_uses_unit_time_factor(rng):
    # a window ending right after tau gives every edge age ~0
    s = build_snapshot([(0, 1, 0.0), (1, 2, 0.0)], 3, 0)
    g = fuse([s], 1e-300)
    layer = HawkesGatLayer(2, 2, 3, rng)
    H = rng.normal(size=(3, 2))
    HW = H @ layer.W.value
    deg = binary_degrees(g).values.astype(float)
    expected = H @ layer.W_root.value
    for i, j in zip(g.src, g.dst):
        expected[i] += HW[j] / np.sqrt(deg[i] * deg[j])
    np.testing.assert_allclose(hawkes_gat_forward(layer, H, g).value, expected, atol=1e-12)


def test_hawkes_gat_isolated_node_gets_root_term_only(rng):
    g = fuse([build_snapshot([(0, 1, 0.5)], 3, 0)], 1.0)
    layer = HawkesGatLayer(2, 2, 3, rng)
    H = rng.normal(size=(3, 2))
    out = hawkes_gat_forward(layer, H, g).value
    np.testing.assert_allclose(out[2], H[2] @ layer.W_root.value)


def test_attention_sums_to_one_per_node(rng):
    g = fuse(random_snapshots(rng, 15, 3, 25), 3.0)
    layer = HawkesGatLayer(3, 4, 15, rng)
    ctx = GraphContext.build(g)
    att = layer.attention(Tensor(rng.normal(size=(15, 4))), ctx).value[:, 0]
    sums = np.bincount(g.csr.pair_src, weights=att, minlength=15)
    has = binary_degrees(g).values > 0
    np.testing.assert_allclose(sums[has], 1.0, atol=1e-12)


def test_message_weight_decreases_with_age(rng):
    layer = HawkesGcnLayer(2, 2, 2, rng)
    layer.W_root.value[:] = 0
    H = rng.normal(size=(2, 2))
    norms = []
    for tau in (0.9, 0.5, 0.1):
        g = fuse([build_snapshot([(0, 1, tau)], 2, 0)], 1.0, symmetrize=False)
        norms.append(np.linalg.norm(hawkes_gcn_forward(layer, H, g).value[0]))
    assert norms[0] >= norms[1] >= norms[2]


def test_plain_gcn_isolated_self_loop_identity(rng):
    g = fuse([build_snapshot([], 1, 0)], 1.0)
    layer = GcnLayer(3, 3, 1, rng)
    layer.W.value = np.eye(3)
    H = rng.normal(size=(1, 3))
    np.testing.assert_allclose(plain_gcn_forward(layer, H, collapse_parallel(g)).value, H)


def test_plain_gcn_matches_normalized_adjacency(rng):
    n = 10
    g = collapse_parallel(fuse(random_snapshots(rng, n, 3, 15), 3.0))
    layer = GcnLayer(3, 4, n, rng)
    H = rng.normal(size=(n, 3))
    A = np.zeros((n, n))
    A[g.src, g.dst] = 1
    np.fill_diagonal(A, 1)
    Dm = np.diag(A.sum(1) ** -0.5)
    np.testing.assert_allclose(plain_gcn_forward(layer, H, g).value,
                               Dm @ A @ Dm @ H @ layer.W.value, atol=1e-12)


def test_plain_gat_single_neighbor_alpha_one(rng):
    g = collapse_parallel(fuse([build_snapshot([], 2, 0)], 1.0))
    layer = GatLayer(2, 2, 2, rng)
    H = rng.normal(size=(2, 2))
    ctx = PlainContext.build(g)
    att = layer.attention(Tensor(H @ layer.W.value), ctx).value
    np.testing.assert_allclose(att, 1.0)
    np.testing.assert_allclose(plain_gat_forward(layer, H, g).value, H @ layer.W.value)


def test_plain_gat_matches_dense_softmax(rng):
    n = 9
    g = collapse_parallel(fuse(random_snapshots(rng, n, 2, 12), 2.0))
    layer = GatLayer(3, 4, n, rng)
    H = rng.normal(size=(n, 3))
    HW = H @ layer.W.value
    A = np.zeros((n, n), bool)
    A[g.src, g.dst] = True
    np.fill_diagonal(A, True)
    out = np.zeros((n, 4))
    for i in range(n):
        nb = np.flatnonzero(A[i])
        e = np.array([np.concatenate([HW[i], HW[j]]) @ layer.a.value[:, 0] for j in nb])
        e = np.where(e > 0, e, 0.2 * e)
        w = np.exp(e - e.max()) / np.exp(e - e.max()).sum()
        out[i] = w @ HW[nb]
    np.testing.assert_allclose(plain_gat_forward(layer, H, g).value, out, atol=1e-12)


def test_delta_zero_collapse_equals_plain_gcn(rng):
    n = 10
    g = fuse(random_snapshots(rng, n, 3, 20), 3.0)
    gc = collapse_parallel(g)
    hg = _identity_gcn(3, n, rng)
    hg.W.value = rng.normal(size=(3, 3))
    plain = GcnLayer(3, 3, n, rng)
    plain.W.value = hg.W.value.copy()
    H = rng.normal(size=(n, 3))
    a = hawkes_gcn_forward(hg, H, gc).value
    b = plain_gcn_forward(plain, H, gc, self_loops=False).value
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_decoder_examples(rng):
    dec = LinkDecoder(3, rng)
    for p in dec.parameters:
        p.value[:] = 0
    H = rng.normal(size=(4, 3))
    np.testing.assert_allclose(decode(dec, H, [(0, 1), (2, 3)]), 0.5)
    dec = LinkDecoder(3, rng)
    a = decode(dec, H, [(0, 1), (0, 1)])
    assert a[0] == a[1]
    with pytest.raises(IndexError):
        decode(dec, H, [(0, 4)])


def test_decoder_matches_dense_mlp(rng):
    dec = LinkDecoder(3, rng)
    dec.b1.value = rng.normal(size=(1, 3))
    H = rng.normal(size=(5, 3))
    pairs = np.array([(0, 1), (3, 2), (4, 4)])
    x = np.hstack([H[pairs[:, 0]], H[pairs[:, 1]]])
    h = np.maximum(x @ dec.W1.value + dec.b1.value, 0)
    z = h @ dec.W2.value + dec.b2.value
    np.testing.assert_allclose(decode(dec, H, pairs), 1 / (1 + np.exp(-z[:, 0])), rtol=1e-12)


@pytest.mark.parametrize("kind", ["hawkes-gcn", "hawkes-gat"])
def test_end_to_end_gradients_10_nodes(kind):
    model, f = gradient_instance(kind, 3)
    ad.backward(f())
    for p in model.parameters:
        num = numeric_gradient(lambda: float(f().value[0, 0]), p)
        assert relative_error(p.grad, num) < 1e-4, p.name


@pytest.mark.parametrize("kind", ["gcn", "gat"])
def test_plain_model_gradients(kind, rng):
    g = fuse(random_snapshots(rng, 8, 2, 12), 2.0)
    model = LinkPredictionModel(kind, 8, 3, 5, 2, 0.0, seed=4)
    model.decoder.b1.value = rng.normal(scale=0.5, size=(1, 5))
    ctx = model.encoder.context(g)
    H0 = Tensor(rng.normal(size=(8, 3)))
    src, dst, y = rng.integers(0, 8, 10), rng.integers(0, 8, 10), rng.integers(0, 2, 10)

    def f():
        H = model.encoder.forward(H0, ctx)
        return ad.bce_with_logits(model.decoder.logits(H, src, dst), y)

    ad.backward(f())
    for p in model.parameters:
        num = numeric_gradient(lambda: float(f().value[0, 0]), p)
        assert relative_error(p.grad, num) < 1e-4, p.name


def test_model_parameters_have_unique_names():
    for kind in ("hawkes-gcn", "hawkes-gat", "gcn", "gat"):
        names = [p.name for p in LinkPredictionModel(kind, 5, 1, 4, 2).parameters]
        assert len(names) == len(set(names))
    with pytest.raises(ValueError):
        LinkPredictionModel("mlp", 5)
