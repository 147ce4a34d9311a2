"""Tensor math, reverse-mode autodiff, layers and Adam."""
from .gradcheck import grad_check, relative_error
from .layers import (
    FeedForward,
    LayerNorm,
    LayerNormParams,
    Linear,
    LinearParams,
    Module,
    glorot,
    layer_norm,
    linear_forward,
    param,
)
from .optim import Adam, AdamState, TrainingError, adam_step
from .tensor import (
    ContractError,
    Tensor,
    as_tensor,
    backward,
    concat,
    gelu,
    no_grad,
    relu,
    sigmoid,
    softmax,
    stack,
    tanh,
)

__all__ = [
    "Adam", "AdamState", "ContractError", "FeedForward", "LayerNorm", "LayerNormParams",
    "Linear", "LinearParams", "Module", "Tensor", "TrainingError", "adam_step", "as_tensor",
    "backward", "concat", "gelu", "glorot", "grad_check", "layer_norm", "linear_forward",
    "no_grad", "param", "relative_error", "relu", "sigmoid", "softmax", "stack", "tanh",
]
