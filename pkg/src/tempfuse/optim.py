"""Adam, cosine annealing, and the binary parameter checkpoint format.

Checkpoint layout (all integers unsigned little-endian)::

    magic    8 bytes   b"TFPARAM1"
    count    u32       number of entries
    entry * count:
        name_len  u16
        name      name_len bytes, UTF-8
        rows      u32
        cols      u32
        data      rows * cols float64 little-endian, row-major

Entries are written in the order given, so a file is byte-stable for fixed
values.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"TFPARAM1"


@dataclass
class OptimizerState:
    base_lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, state: OptimizerState, lr: float | None = None):
    """One bias-corrected Adam update; gradients are cleared afterwards."""
    lr = state.base_lr if lr is None else lr
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(f"non-finite gradient in parameter {p.name!r}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p in params:
        g = p.grad
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        v = state.v[p.name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p.value = p.value - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if not np.all(np.isfinite(p.value)):
            raise FloatingPointError(f"parameter {p.name!r} became non-finite")
        p.zero_grad()


def cosine_anneal_lr(base_lr: float, epoch: float, t_max: float) -> float:
    if t_max <= 0:
        raise ValueError(f"t_max must be positive, got {t_max}")
    if not 0 <= epoch <= t_max:
        raise ValueError(f"epoch {epoch} outside [0, {t_max}]")
    return base_lr * (1 + math.cos(math.pi * epoch / t_max)) / 2


def save_arrays(path, arrays: dict):
    """Write named 2-D float64 arrays in the checkpoint layout above."""
    out = [MAGIC, struct.pack("<I", len(arrays))]
    for name, a in arrays.items():
        a = np.asarray(a, dtype="<f8")
        if a.ndim == 1:
            a = a.reshape(-1, 1)
        elif a.ndim == 0:
            a = a.reshape(1, 1)
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)))
        out.append(raw)
        out.append(struct.pack("<II", *a.shape))
        out.append(np.ascontiguousarray(a).tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(out))


def load_arrays(path) -> dict:
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:8] != MAGIC:
        raise ValueError(f"{path}: not a parameter file")
    (count,) = struct.unpack_from("<I", buf, 8)
    pos = 12
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos:pos + nlen].decode("utf-8")
        pos += nlen
        rows, cols = struct.unpack_from("<II", buf, pos)
        pos += 8
        nbytes = rows * cols * 8
        if pos + nbytes > len(buf):
            raise ValueError(f"{path}: truncated entry {name!r}")
        arrays[name] = np.frombuffer(buf, dtype="<f8", count=rows * cols,
                                     offset=pos).reshape(rows, cols).astype(np.float64)
        pos += nbytes
    return arrays


def save_parameters(path, params):
    save_arrays(path, {p.name: p.value for p in params})


def load_parameters(path, params):
    arrays = load_arrays(path)
    for p in params:
        if p.name not in arrays:
            raise KeyError(f"{path}: missing parameter {p.name!r}")
        if arrays[p.name].shape != p.value.shape:
            raise ValueError(f"{path}: {p.name!r} has shape {arrays[p.name].shape}, "
                             f"expected {p.value.shape}")
        p.value = arrays[p.name].copy()
        p.zero_grad()
    return arrays


def optimizer_arrays(state: OptimizerState) -> dict:
    out = {"adam.step": np.array([[state.step]], dtype=np.float64)}
    for name in state.m:
        out[f"adam.m.{name}"] = state.m[name]
        out[f"adam.v.{name}"] = state.v[name]
    return out


def restore_optimizer(state: OptimizerState, arrays: dict):
    state.step = int(arrays["adam.step"][0, 0])
    state.m, state.v = {}, {}
    for key, a in arrays.items():
        if key.startswith("adam.m."):
            state.m[key[7:]] = a.copy()
        elif key.startswith("adam.v."):
            state.v[key[7:]] = a.copy()

