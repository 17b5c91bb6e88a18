"""Layer stacks, reverse-mode gradients, Adam and checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .. import defaults
from .functional import bce_grad, bce_loss
from .layers import LayerSpec, layer_bwd, layer_fwd

CHECKPOINT_VERSION = 1


@dataclass
class NeuralModel:
    specs: list
    input_dim: int
    params: list
    seed: int | None = None
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    def __post_init__(self):
        if not self.m:
            self.m = [{k: np.zeros_like(p) for k, p in layer.items()} for layer in self.params]
        if not self.v:
            self.v = [{k: np.zeros_like(p) for k, p in layer.items()} for layer in self.params]

    @property
    def n_params(self) -> int:
        return sum(p.size for layer in self.params for p in layer.values())

    @property
    def output_dim(self) -> int:
        return self.dims()[-1]

    def dims(self) -> list[int]:
        dims = [self.input_dim]
        for spec in self.specs:
            dims.append(spec.output_dim(dims[-1]))
        return dims

    def forward(self, X, upto=None):
        """Run the stack on a batch; ``upto`` stops after that many layers."""
        out = np.atleast_2d(np.asarray(X, dtype=np.float64))
        n = len(self.specs) if upto is None else upto
        for spec, params in zip(self.specs[:n], self.params[:n]):
            out, _ = layer_fwd(spec, params, out)
        return out

    def copy(self) -> "NeuralModel":
        dup = lambda tensors: [{k: a.copy() for k, a in layer.items()} for layer in tensors]
        return NeuralModel(list(self.specs), self.input_dim, dup(self.params), self.seed,
                           dup(self.m), dup(self.v), self.t)


def init_params(specs, input_dim: int, seed=None) -> NeuralModel:
    """Glorot-uniform weights and zero biases.

    Convolution kernels use ``fan_in = k`` and ``fan_out = f * k``.
    """
    specs = [s if isinstance(s, LayerSpec) else LayerSpec(**s) for s in specs]
    rng = np.random.default_rng(seed)
    params = []
    dim = input_dim
    for spec in specs:
        out = spec.output_dim(dim)
        if spec.kind == "dense":
            shape, fan_in, fan_out, nb = (out, dim), dim, out, out
        elif spec.kind == "conv1d":
            shape = (spec.filters, spec.kernel)
            fan_in, fan_out, nb = spec.kernel, spec.filters * spec.kernel, spec.filters
        else:
            shape, fan_in, fan_out, nb = (dim, dim), dim, dim, dim
        if out < 1:
            raise ValueError(f"layer {spec.kind} produces an empty output from {dim} inputs")
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        key = "K" if spec.kind == "conv1d" else "W"
        params.append({key: rng.uniform(-limit, limit, size=shape), "b": np.zeros(nb)})
        dim = out
    return NeuralModel(specs, input_dim, params, seed)


def backward(model: NeuralModel, X, Y, clip=defaults.PROB_CLIP):
    """Batch-mean BCE of the model output and its gradients for every tensor."""
    out = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    caches = []
    for spec, params in zip(model.specs, model.params):
        out, cache = layer_fwd(spec, params, out)
        caches.append(cache)
    loss = bce_loss(out, Y, clip)
    grad = bce_grad(out, Y, clip)
    grads = [None] * len(model.specs)
    for i in reversed(range(len(model.specs))):
        grad, grads[i] = layer_bwd(model.specs[i], model.params[i], grad, caches[i])
    return loss, grads


def adam_step(model: NeuralModel, grads, lr=defaults.LEARNING_RATE, beta1=defaults.BETA1,
              beta2=defaults.BETA2, eps=defaults.ADAM_EPS) -> NeuralModel:
    """One in-place Adam update with bias correction."""
    if len(grads) != len(model.params):
        raise ValueError("gradient list does not match the layer count")
    model.t += 1
    c1 = 1.0 - beta1 ** model.t
    c2 = 1.0 - beta2 ** model.t
    for params, m, v, g in zip(model.params, model.m, model.v, grads):
        for key, p in params.items():
            gk = g[key]
            if gk.shape != p.shape:
                raise ValueError(f"gradient for {key} has shape {gk.shape}, expected {p.shape}")
            m[key] = beta1 * m[key] + (1.0 - beta1) * gk
            v[key] = beta2 * v[key] + (1.0 - beta2) * gk * gk
            p -= lr * (m[key] / c1) / (np.sqrt(v[key] / c2) + eps)
    return model


def _tensors(layers):
    return [{k: {"shape": list(a.shape), "data": a.ravel().tolist()} for k, a in layer.items()}
            for layer in layers]


def _arrays(layers):
    return [{k: np.asarray(d["data"], dtype=np.float64).reshape(d["shape"]) for k, d in layer.items()}
            for layer in layers]


def model_to_dict(model: NeuralModel) -> dict:
    return {
        "format_version": CHECKPOINT_VERSION,
        "input_dim": model.input_dim,
        "seed": model.seed,
        "specs": [s.to_dict() for s in model.specs],
        "params": _tensors(model.params),
        "adam": {"t": model.t, "m": _tensors(model.m), "v": _tensors(model.v)},
    }


def model_from_dict(d: dict) -> NeuralModel:
    if d.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('format_version')!r}")
    return NeuralModel(
        [LayerSpec(**s) for s in d["specs"]], d["input_dim"], _arrays(d["params"]), d["seed"],
        _arrays(d["adam"]["m"]), _arrays(d["adam"]["v"]), d["adam"]["t"],
    )


def save_model(model: NeuralModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> NeuralModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
