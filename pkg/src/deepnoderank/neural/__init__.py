"""Minimal feed-forward stack: dense, conv1d + mean pooling, attention gate."""

from .functional import activation, activation_grad, bce_grad, bce_loss, softmax
from .layers import LayerSpec, attention_forward, conv1d_forward, dense_forward
from .model import (NeuralModel, adam_step, backward, init_params, load_model, model_from_dict,
                    model_to_dict, save_model)

__all__ = [
    "LayerSpec", "NeuralModel", "activation", "activation_grad", "adam_step", "attention_forward",
    "backward", "bce_grad", "bce_loss", "conv1d_forward", "dense_forward", "init_params",
    "load_model", "model_from_dict", "model_to_dict", "save_model", "softmax",
]
