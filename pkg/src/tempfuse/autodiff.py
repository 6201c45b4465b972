"""Dense-matrix reverse-mode differentiation.

Every value is a 2-D float64 array wrapped in a ``Tensor``.  Operations
record their parents and a gradient rule; ``backward`` walks the recorded
graph in reverse topological order and accumulates exact gradients.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "parents", "grad_fn", "name")

    def __init__(self, value, requires_grad=False, parents=(), grad_fn=None, name=None):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim == 0:
            value = value.reshape(1, 1)
        elif value.ndim == 1:
            value = value.reshape(-1, 1)
        elif value.ndim != 2:
            raise ValueError(f"Tensor values must be 2-D, got shape {value.shape}")
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.grad_fn = grad_fn
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def sum(self):
        return reduce_sum(self)

    def backward(self):
        backward(self)


class Parameter(Tensor):
    """Trainable leaf tensor with a persistent gradient accumulator."""

    __slots__ = ()

    def __init__(self, value, name=None):
        super().__init__(value, requires_grad=True, name=name)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, parents, grad_fn, name=None):
    req = any(p.requires_grad for p in parents)
    return Tensor(value, requires_grad=req, parents=parents if req else (),
                  grad_fn=grad_fn if req else None, name=name)


def backward(loss: Tensor):
    """Populate ``.grad`` of every tensor that ``loss`` depends on."""
    if loss.shape != (1, 1):
        raise ValueError(f"backward needs a 1x1 loss, got shape {loss.shape}")
    order, seen = [], set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    grads = {id(loss): np.ones((1, 1))}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Parameter):
            node.grad = node.grad + g
        else:
            node.grad = g
        if node.grad_fn is None:
            continue
        for p, pg in zip(node.parents, node.grad_fn(g)):
            if pg is None or not p.requires_grad:
                continue
            prev = grads.get(id(p))
            grads[id(p)] = pg if prev is None else prev + pg


def _check_same(a, b, op):
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return _node(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "add")
    return _node(a.value + b.value, (a, b), lambda g: (g, g))


def add_row(a, bias) -> Tensor:
    """Add a ``1 x d`` row vector to every row of ``a``."""
    a, bias = as_tensor(a), as_tensor(bias)
    if bias.shape != (1, a.shape[1]):
        raise ValueError(f"add_row: bias shape {bias.shape} incompatible with {a.shape}")
    return _node(a.value + bias.value, (a, bias), lambda g: (g, g.sum(axis=0, keepdims=True)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "mul")
    av, bv = a.value, b.value
    return _node(av * bv, (a, b), lambda g: (g * bv, g * av))


def mul_const(a, c) -> Tensor:
    """Multiply by a constant array broadcastable to ``a`` (e.g. a column)."""
    a = as_tensor(a)
    c = np.asarray(c, dtype=np.float64)
    if c.ndim == 1:
        c = c[:, None]
    out = a.value * c
    if out.shape != a.shape:
        raise ValueError(f"mul_const: {c.shape} does not broadcast to {a.shape}")
    return _node(out, (a,), lambda g: (g * c,))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _node(a.value * c, (a,), lambda g: (g * c,))


def reduce_sum(a) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _node(a.value.sum(keepdims=True).reshape(1, 1), (a,),
                 lambda g: (np.full(shape, g[0, 0]),))


def mean(a) -> Tensor:
    a = as_tensor(a)
    return scale(reduce_sum(a), 1.0 / a.value.size)


def concat_rows(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"concat_rows: column mismatch {a.shape} vs {b.shape}")
    k = a.shape[0]
    return _node(np.vstack([a.value, b.value]), (a, b), lambda g: (g[:k], g[k:]))


def concat_cols(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"concat_cols: row mismatch {a.shape} vs {b.shape}")
    k = a.shape[1]
    return _node(np.hstack([a.value, b.value]), (a, b), lambda g: (g[:, :k], g[:, k:]))


class Segments:
    """Grouping of ``m`` rows into ``num`` segments by integer id."""

    def __init__(self, ids, num: int):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= num):
            raise ValueError("segment id out of range")
        self.ids = ids
        self.num = int(num)
        self._matrix = None

    def __len__(self):
        return int(self.ids.shape[0])

    @property
    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None:
            m = len(self)
            self._matrix = sp.csr_matrix((np.ones(m), (self.ids, np.arange(m))),
                                         shape=(self.num, m))
        return self._matrix

    def sum(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] == 1:
            return np.bincount(self.ids, weights=x[:, 0], minlength=self.num)[:, None]
        return np.asarray(self.matrix @ x)


def gather_rows(a, idx) -> Tensor:
    """Select rows ``a[idx]``; the gradient scatters back with summation."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    n = a.shape[0]
    seg = Segments(idx, n)
    return _node(a.value[idx], (a,), lambda g: (seg.sum(g),))


def segment_weighted_sum(messages, weights, segments: Segments) -> Tensor:
    """``out[s] = sum over rows r in segment s of weights[r] * messages[r]``."""
    messages, weights = as_tensor(messages), as_tensor(weights)
    m = len(segments)
    if messages.shape[0] != m or weights.shape != (m, 1):
        raise ValueError(f"segment_weighted_sum: messages {messages.shape}, weights "
                         f"{weights.shape}, {m} segment ids")
    mv, wv, ids = messages.value, weights.value, segments.ids

    def grad_fn(g):
        gr = g[ids]
        return gr * wv, np.sum(gr * mv, axis=1, keepdims=True)

    return _node(segments.sum(wv * mv), (messages, weights), grad_fn)


def segment_softmax(scores, segments: Segments) -> Tensor:
    """Softmax of a score column within each segment."""
    scores = as_tensor(scores)
    m = len(segments)
    if m == 0:
        raise ValueError("segment_softmax: empty input")
    if scores.shape != (m, 1):
        raise ValueError(f"segment_softmax: scores {scores.shape}, {m} segment ids")
    ids = segments.ids
    s = scores.value[:, 0]
    seg_max = np.full(segments.num, -np.inf)
    np.maximum.at(seg_max, ids, s)
    e = np.exp(s - seg_max[ids])
    y = e / np.bincount(ids, weights=e, minlength=segments.num)[ids]
    y = y[:, None]

    def grad_fn(g):
        dot = np.bincount(ids, weights=(g * y)[:, 0], minlength=segments.num)
        return (y * (g - dot[ids][:, None]),)

    return _node(y, (scores,), grad_fn)


LEAKY_SLOPE = 0.2


def leaky_relu(a, slope=LEAKY_SLOPE) -> Tensor:
    a = as_tensor(a)
    v = a.value
    d = np.where(v > 0, 1.0, slope)
    return _node(v * d, (a,), lambda g: (g * d,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    return _node(a.value * mask, (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = _sigmoid(a.value)
    return _node(y, (a,), lambda g: (g * y * (1.0 - y),))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(under="ignore"):
        y = np.exp(a.value)
    return _node(y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    v = a.value
    return _node(np.log(v), (a,), lambda g: (g / v,))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    v = a.value
    return _node(np.logaddexp(0.0, v), (a,), lambda g: (g * _sigmoid(v),))


def dropout(a, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: kept entries are scaled by ``1 / (1 - p)``."""
    if not 0 <= p < 1:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    a = as_tensor(a)
    if not training or p == 0:
        return a
    mask = (rng.random(a.shape) >= p) / (1.0 - p)
    return _node(a.value * mask, (a,), lambda g: (g * mask,))


class BatchNormState:
    """Running column statistics for ``row_normalize_bn`` at inference time."""

    def __init__(self, dim, momentum=0.1, eps=1e-5):
        self.running_mean = np.zeros((1, dim))
        self.running_var = np.ones((1, dim))
        self.momentum = momentum
        self.eps = eps


def row_normalize_bn(a, state: BatchNormState, training: bool) -> Tensor:
    """Normalize every column to zero mean and unit variance over the rows."""
    a = as_tensor(a)
    x = a.value
    if not training:
        inv = 1.0 / np.sqrt(state.running_var + state.eps)
        return mul_const(add_row(a, Tensor(-state.running_mean)), np.broadcast_to(inv, a.shape))
    n = x.shape[0]
    mu = x.mean(axis=0, keepdims=True)
    var = x.var(axis=0, keepdims=True)
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = (x - mu) * inv
    m = state.momentum
    state.running_mean = (1 - m) * state.running_mean + m * mu
    unbiased = var * n / max(n - 1, 1)
    state.running_var = (1 - m) * state.running_var + m * unbiased

    def grad_fn(g):
        gm = g.mean(axis=0, keepdims=True)
        gx = (g * xhat).mean(axis=0, keepdims=True)
        return (inv * (g - gm - xhat * gx),)

    return _node(xhat, (a,), grad_fn)


PROB_CLAMP = 1e-12


def bce_loss(preds, labels) -> Tensor:
    """Mean binary cross-entropy of probabilities against 0/1 labels.

    Predictions are clamped to ``[1e-12, 1 - 1e-12]`` inside the logarithms.
    """
    preds = as_tensor(preds)
    y = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    if preds.value.size == 0:
        raise ValueError("bce_loss: empty input")
    if preds.shape != y.shape:
        raise ValueError(f"bce_loss: {preds.shape[0]} predictions vs {y.shape[0]} labels")
    p = preds.value
    pc = np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)
    m = p.shape[0]
    loss = -np.sum(y * np.log(pc) + (1 - y) * np.log(1 - pc)) / m
    inside = (p > PROB_CLAMP) & (p < 1 - PROB_CLAMP)

    def grad_fn(g):
        return (g[0, 0] * inside * (pc - y) / (pc * (1 - pc)) / m,)

    return _node(np.array([[loss]]), (preds,), grad_fn)


def bce_with_logits(logits, labels) -> Tensor:
    """``bce_loss(sigmoid(logits), labels)`` evaluated without forming ``1 - p``.

    Same clamp: each term is capped at ``-log(1e-12)`` and has zero gradient
    there.  Avoids the cancellation in ``log(1 - p)`` when ``p`` is near one.
    """
    z = as_tensor(logits)
    y = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    if z.value.size == 0:
        raise ValueError("bce_with_logits: empty input")
    if z.shape != y.shape:
        raise ValueError(f"bce_with_logits: {z.shape[0]} logits vs {y.shape[0]} labels")
    v = z.value
    cap = -np.log(PROB_CLAMP)
    # -log(p) = softplus(-z), -log(1 - p) = softplus(z)
    terms = y * np.logaddexp(0.0, -v) + (1 - y) * np.logaddexp(0.0, v)
    inside = terms < cap
    m = v.shape[0]
    loss = float(np.sum(np.minimum(terms, cap))) / m

    def grad_fn(g):
        return (g[0, 0] * inside * (_sigmoid(v) - y) / m,)

    return _node(np.array([[loss]]), (z,), grad_fn)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))
