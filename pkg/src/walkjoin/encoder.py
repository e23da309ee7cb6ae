"""Neural scoring of joined queries with hand-written backprop.

Architecture: a 2-layer step encoder applied to every dense row, a mean
over the m+1 steps of each walk, an exact mean over all walks (the subgraph
representation), and a 2-layer classifier producing one logit. Everything
runs in float64; gradients are analytic and checked against central finite
differences in the test suite.

The walk-level mean uses exactly rounded summation (math.fsum), so the
logit is bitwise invariant under any permutation of the walks and identical
between batched and single-query evaluation.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

_MAGIC = b"SURM"
_VERSION = 1
_TENSOR_ORDER = ("w1", "b1", "w2", "b2", "u1", "c1", "u2", "c2")


class CheckpointError(RuntimeError):
    """Raised for bad checkpoint files or store/model config mismatches."""


@dataclass
class ModelParams:
    """Weights of the step encoder (w1,b1,w2,b2) and classifier (u1,c1,u2,c2)."""

    arity: int
    walk_steps: int
    hidden: int
    feature_dim: int
    dropout: float
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    u1: np.ndarray
    c1: np.ndarray
    u2: np.ndarray
    c2: np.ndarray
    version: int = 0  # bumped by adam_step; guards stale forward caches

    @property
    def d_in(self) -> int:
        return self.arity * (self.walk_steps + 1) + self.feature_dim

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _TENSOR_ORDER}

    def copy(self) -> "ModelParams":
        kwargs = {name: getattr(self, name).copy() for name in _TENSOR_ORDER}
        return ModelParams(
            self.arity, self.walk_steps, self.hidden, self.feature_dim, self.dropout,
            version=self.version, **kwargs,
        )


@dataclass
class AdamState:
    """First/second moment accumulators mirroring the parameter shapes."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ModelParams, lr: float = 1e-3) -> "AdamState":
        state = cls(lr=lr)
        for name, tensor in params.tensors().items():
            state.m[name] = np.zeros_like(tensor)
            state.v[name] = np.zeros_like(tensor)
        return state


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def init_params(
    arity: int,
    walk_steps: int,
    hidden: int = 64,
    feature_dim: int = 0,
    dropout: float = 0.1,
    seed: int = 0,
) -> ModelParams:
    """Seeded glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    d_in = arity * (walk_steps + 1) + feature_dim
    return ModelParams(
        arity=arity,
        walk_steps=walk_steps,
        hidden=hidden,
        feature_dim=feature_dim,
        dropout=dropout,
        w1=_glorot(rng, d_in, hidden),
        b1=np.zeros(hidden),
        w2=_glorot(rng, hidden, hidden),
        b2=np.zeros(hidden),
        u1=_glorot(rng, hidden, hidden),
        c1=np.zeros(hidden),
        u2=_glorot(rng, hidden, 1)[:, 0],
        c2=np.zeros(1),
    )


def _exact_mean_over_rows(x: np.ndarray) -> np.ndarray:
    """Correctly rounded column means of [rows, h]; order-invariant."""
    rows = x.shape[0]
    return np.array([math.fsum(x[:, h]) for h in range(x.shape[1])]) / rows


def forward(
    params: ModelParams,
    dense: np.ndarray,
    training: bool = False,
    dropout_rng: Optional[np.random.Generator] = None,
):
    """Score one joined query ([rows, d_in] -> scalar logit) or a batch
    ([B, rows, d_in] -> [B] logits). Returns (logit(s), cache).

    Dropout hits the step encoder's hidden layer only, inverted-scaled, and
    only when training with a nonzero rate.
    """
    dense = np.asarray(dense, dtype=np.float64)
    batched = dense.ndim == 3
    x = dense if batched else dense[None]
    n_batch, n_rows, d_in = x.shape
    if d_in != params.d_in:
        raise ValueError(f"input width {d_in} does not match model d_in {params.d_in}")
    width = params.walk_steps + 1
    if n_rows % width != 0:
        raise ValueError(f"row count {n_rows} is not a multiple of m+1 = {width}")
    n_walks = n_rows // width

    flat = x.reshape(n_batch * n_rows, d_in)
    z1 = flat @ params.w1 + params.b1
    a1 = np.maximum(z1, 0.0)
    drop_mask = None
    if training and params.dropout > 0.0:
        if dropout_rng is None:
            raise ValueError("training forward needs a dropout_rng")
        keep = 1.0 - params.dropout
        drop_mask = (dropout_rng.random(a1.shape) < keep) / keep
        a1 = a1 * drop_mask
    e = a1 @ params.w2 + params.b2
    walk_enc = e.reshape(n_batch, n_walks, width, params.hidden).mean(axis=2)
    hq = np.stack([_exact_mean_over_rows(walk_enc[b]) for b in range(n_batch)])
    z2 = hq @ params.u1 + params.c1
    a2 = np.maximum(z2, 0.0)
    logits = a2 @ params.u2 + params.c2[0]

    cache = {
        "x": flat,
        "relu1": z1 > 0.0,
        "drop_mask": drop_mask,
        "a1d": a1,
        "hq": hq,
        "relu2": z2 > 0.0,
        "a2": a2,
        "logits": logits,
        "n_walks": n_walks,
        "width": width,
        "batched": batched,
        "version": params.version,
    }
    return (logits if batched else float(logits[0])), cache


def bce_loss(logit, label) -> float:
    """Numerically stable binary cross entropy on the logit scale."""
    z = np.asarray(logit, dtype=np.float64)
    y = np.asarray(label, dtype=np.float64)
    loss = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return float(np.mean(loss))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def backward(params: ModelParams, cache: dict, label) -> dict[str, np.ndarray]:
    """Gradients of the mean BCE loss w.r.t. every parameter tensor.

    The cache must come from a forward pass against the current params;
    anything older (params stepped since) is rejected.
    """
    if cache["version"] != params.version:
        raise ValueError("stale cache: params were updated after this forward pass")
    logits = cache["logits"]
    n_batch = logits.shape[0]
    y = np.atleast_1d(np.asarray(label, dtype=np.float64))
    if y.shape[0] != n_batch:
        raise ValueError(f"got {y.shape[0]} labels for {n_batch} queries")
    n_walks, width = cache["n_walks"], cache["width"]

    dlogit = (_sigmoid(logits) - y) / n_batch
    dc2 = np.array([dlogit.sum()])
    du2 = cache["a2"].T @ dlogit
    dz2 = np.outer(dlogit, params.u2) * cache["relu2"]
    dc1 = dz2.sum(axis=0)
    du1 = cache["hq"].T @ dz2
    dhq = dz2 @ params.u1.T

    # mean pooling spreads each query's gradient uniformly over its rows
    de = np.repeat(dhq / (n_walks * width), n_walks * width, axis=0)
    db2 = de.sum(axis=0)
    dw2 = cache["a1d"].T @ de
    da1 = de @ params.w2.T
    if cache["drop_mask"] is not None:
        da1 = da1 * cache["drop_mask"]
    dz1 = da1 * cache["relu1"]
    db1 = dz1.sum(axis=0)
    dw1 = cache["x"].T @ dz1
    return {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2, "u1": du1, "c1": dc1, "u2": du2, "c2": dc2}


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: AdamState) -> None:
    """Standard bias-corrected Adam update, in place."""
    state.step += 1
    t = state.step
    for name, tensor in params.tensors().items():
        g = grads[name]
        if g.shape != tensor.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {tensor.shape} for {name}")
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = state.m[name] / (1.0 - state.beta1**t)
        v_hat = state.v[name] / (1.0 - state.beta2**t)
        tensor -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    params.version += 1


def save_checkpoint(path, params: ModelParams, state: AdamState, num_walks: int) -> None:
    """Versioned binary checkpoint: config header, then parameter and
    optimizer tensors in a fixed order."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(
            struct.pack(
                "<IIIIIIdQdddd",
                _VERSION,
                params.arity,
                params.walk_steps,
                params.hidden,
                params.feature_dim,
                int(num_walks),
                params.dropout,
                state.step,
                state.lr,
                state.beta1,
                state.beta2,
                state.eps,
            )
        )
        for name in _TENSOR_ORDER:
            fh.write(np.ascontiguousarray(getattr(params, name)).tobytes())
        for name in _TENSOR_ORDER:
            fh.write(np.ascontiguousarray(state.m[name]).tobytes())
            fh.write(np.ascontiguousarray(state.v[name]).tobytes())


def load_checkpoint(path, store=None) -> tuple[ModelParams, AdamState, int]:
    """Load a checkpoint; with a store given, verify (M, m) compatibility."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise CheckpointError(f"bad magic {data[:4]!r}, expected {_MAGIC!r}")
    header_fmt = "<IIIIIIdQdddd"
    header_size = 4 + struct.calcsize(header_fmt)
    if len(data) < header_size:
        raise CheckpointError("truncated checkpoint (header)")
    (
        version, arity, walk_steps, hidden, feature_dim, num_walks,
        dropout, step, lr, beta1, beta2, eps,
    ) = struct.unpack_from(header_fmt, data, 4)
    if version != _VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    d_in = arity * (walk_steps + 1) + feature_dim
    shapes = {
        "w1": (d_in, hidden), "b1": (hidden,), "w2": (hidden, hidden), "b2": (hidden,),
        "u1": (hidden, hidden), "c1": (hidden,), "u2": (hidden,), "c2": (1,),
    }
    off = header_size

    def take(shape):
        nonlocal off
        count = int(np.prod(shape))
        nbytes = 8 * count
        if off + nbytes > len(data):
            raise CheckpointError("truncated checkpoint")
        arr = np.frombuffer(data, dtype=np.float64, count=count, offset=off).copy()
        off += nbytes
        return arr.reshape(shape)

    tensors = {name: take(shapes[name]) for name in _TENSOR_ORDER}
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=step)
    for name in _TENSOR_ORDER:
        state.m[name] = take(shapes[name])
        state.v[name] = take(shapes[name])
    if off != len(data):
        raise CheckpointError(f"checkpoint has {len(data) - off} trailing bytes")
    params = ModelParams(
        arity=arity, walk_steps=walk_steps, hidden=hidden, feature_dim=feature_dim,
        dropout=dropout, **tensors,
    )
    if store is not None:
        if store.num_walks != num_walks or store.walk_steps != walk_steps:
            raise CheckpointError(
                f"checkpoint trained with (M={num_walks}, m={walk_steps}) but store has "
                f"(M={store.num_walks}, m={store.walk_steps})"
            )
    return params, state, int(num_walks)
