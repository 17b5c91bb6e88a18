"""Forward and backward passes for the three layer kinds.

All functions work on 2-D ``(batch, features)`` arrays; the public
``*_forward`` helpers also accept a single 1-D vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .functional import ACTIVATIONS, activation, activation_grad, softmax

KINDS = ("dense", "conv1d", "attention_gate")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_dim: int | None = None
    activation: str = "none"
    filters: int | None = None
    kernel: int | None = None
    pool: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind == "dense" and (self.out_dim is None or self.out_dim < 1):
            raise ValueError("dense layers need out_dim >= 1")
        if self.kind == "conv1d":
            for name in ("filters", "kernel", "pool"):
                v = getattr(self, name)
                if v is None or v < 1:
                    raise ValueError(f"conv1d layers need {name} >= 1")

    def output_dim(self, input_dim: int) -> int:
        if self.kind == "dense":
            return self.out_dim
        if self.kind == "conv1d":
            if self.kernel > input_dim:
                raise ValueError(f"kernel {self.kernel} exceeds input length {input_dim}")
            return self.filters * ((input_dim - self.kernel + 1) // self.pool)
        return input_dim

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


# dense

def dense_fwd(params, x, act):
    W, b = params["W"], params["b"]
    if x.shape[1] != W.shape[1]:
        raise ValueError(f"dense layer expects {W.shape[1]} inputs, got {x.shape[1]}")
    z = x @ W.T + b
    return activation(act, z), (x, z)


def dense_bwd(params, dout, cache, act):
    x, z = cache
    dz = dout * activation_grad(act, z)
    grads = {"W": dz.T @ x, "b": dz.sum(axis=0)}
    return dz @ params["W"], grads


def dense_forward(params, x, activation="none"):
    """``activation(W x + b)``."""
    xb, single = _as_batch(x)
    out, _ = dense_fwd(params, xb, activation)
    return out[0] if single else out


# conv1d with average pooling

def conv1d_fwd(params, x, act, pool):
    K, b = params["K"], params["b"]
    f, k = K.shape
    if x.shape[1] < k:
        raise ValueError(f"input length {x.shape[1]} is shorter than kernel {k}")
    windows = sliding_window_view(x, k, axis=1)  # (B, L', k)
    z = np.einsum("btj,fj->bft", windows, K) + b[None, :, None]
    a = activation(act, z)
    n_pool = z.shape[2] // pool
    used = a[:, :, : n_pool * pool].reshape(x.shape[0], f, n_pool, pool)
    out = used.mean(axis=3).reshape(x.shape[0], f * n_pool)
    return out, (x, windows, z, n_pool)


def conv1d_bwd(params, dout, cache, act, pool):
    x, windows, z, n_pool = cache
    K = params["K"]
    f, k = K.shape
    B, _, span = z.shape
    da = np.zeros_like(z)
    d = dout.reshape(B, f, n_pool, 1) / pool
    da[:, :, : n_pool * pool] = np.broadcast_to(d, (B, f, n_pool, pool)).reshape(B, f, n_pool * pool)
    dz = da * activation_grad(act, z)
    grads = {"K": np.einsum("bft,btj->fj", dz, windows), "b": dz.sum(axis=(0, 2))}
    dx = np.zeros_like(x)
    for j in range(k):
        dx[:, j : j + span] += np.einsum("bft,f->bt", dz, K[:, j])
    return dx, grads


def conv1d_forward(params, x, activation="none", pool=1):
    """Valid stride-1 convolution per filter, then mean pooling; filters concatenated."""
    xb, single = _as_batch(x)
    out, _ = conv1d_fwd(params, xb, activation, pool)
    return out[0] if single else out


# softmax attention gate

def attention_fwd(params, x):
    W, b = params["W"], params["b"]
    if W.shape != (x.shape[1], x.shape[1]):
        raise ValueError(f"attention weight {W.shape} does not match input length {x.shape[1]}")
    s = softmax(x @ W.T + b, axis=1)
    return x * s, (x, s)


def attention_bwd(params, dout, cache):
    x, s = cache
    ds = dout * x
    dz = s * (ds - (ds * s).sum(axis=1, keepdims=True))
    grads = {"W": dz.T @ x, "b": dz.sum(axis=0)}
    return dout * s + dz @ params["W"], grads


def attention_forward(params, x):
    """``x * softmax(W x + b)``."""
    xb, single = _as_batch(x)
    out, _ = attention_fwd(params, xb)
    return out[0] if single else out


def layer_fwd(spec: LayerSpec, params, x):
    if spec.kind == "dense":
        return dense_fwd(params, x, spec.activation)
    if spec.kind == "conv1d":
        return conv1d_fwd(params, x, spec.activation, spec.pool)
    return attention_fwd(params, x)


def layer_bwd(spec: LayerSpec, params, dout, cache):
    if spec.kind == "dense":
        return dense_bwd(params, dout, cache, spec.activation)
    if spec.kind == "conv1d":
        return conv1d_bwd(params, dout, cache, spec.activation, spec.pool)
    return attention_bwd(params, dout, cache)
