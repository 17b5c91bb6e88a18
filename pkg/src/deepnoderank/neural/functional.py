"""Activations, softmax and the binary cross-entropy loss."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .. import defaults

ACTIVATIONS = ("relu", "leaky_relu", "elu", "sigmoid", "none")

LEAKY_SLOPE = 0.01
ELU_SCALE = 0.01


def activation(kind: str, x):
    x = np.asarray(x, dtype=np.float64)
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "leaky_relu":
        return np.where(x < 0, LEAKY_SLOPE * x, x)
    if kind == "elu":
        return np.where(x < 0, ELU_SCALE * np.expm1(np.minimum(x, 0.0)), x)
    if kind == "sigmoid":
        return expit(x)
    if kind == "none":
        return x.copy()
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_grad(kind: str, x):
    """Derivative of ``activation(kind, .)`` evaluated at ``x`` (pre-activation)."""
    x = np.asarray(x, dtype=np.float64)
    if kind == "relu":
        return (x > 0).astype(np.float64)
    if kind == "leaky_relu":
        return np.where(x < 0, LEAKY_SLOPE, 1.0)
    if kind == "elu":
        return np.where(x < 0, ELU_SCALE * np.exp(np.minimum(x, 0.0)), 1.0)
    if kind == "sigmoid":
        s = expit(x)
        return s * (1.0 - s)
    if kind == "none":
        return np.ones_like(x)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def softmax(z, axis=-1):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def bce_loss(predictions, targets, clip=defaults.PROB_CLIP) -> float:
    """Two-sided binary cross-entropy, averaged over outputs and instances."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"prediction shape {p.shape} does not match target shape {y.shape}")
    p = np.clip(p, clip, 1.0 - clip)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def bce_grad(predictions, targets, clip=defaults.PROB_CLIP):
    """Gradient of :func:`bce_loss` with respect to the probabilities."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"prediction shape {p.shape} does not match target shape {y.shape}")
    inside = (p > clip) & (p < 1.0 - clip)
    pc = np.clip(p, clip, 1.0 - clip)
    g = (pc - y) / (pc * (1.0 - pc)) / p.size
    return np.where(inside, g, 0.0)
