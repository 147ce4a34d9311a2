"""Parameter containers and the standard layers built on them."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import ContractError, Tensor


class Module:
    """Collects :class:`Tensor` parameters from attributes in assignment order.

    Child modules and lists of modules are walked recursively, so
    ``named_parameters`` yields a stable declaration order that checkpoints
    rely on.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def to_dtype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise ContractError(f"state mismatch: missing={missing} unexpected={extra}")
        for k, p in own.items():
            if state[k].shape != p.data.shape:
                raise ContractError(f"{k}: shape {state[k].shape} != {p.data.shape}")
            p.data = np.array(state[k], dtype=p.data.dtype)


def param(data: np.ndarray, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def glorot(rng: np.random.Generator, fan_out: int, fan_in: int, dtype=T.DEFAULT_DTYPE) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return param(rng.uniform(-limit, limit, size=(fan_out, fan_in)).astype(dtype))


def zeros(n: int, dtype=T.DEFAULT_DTYPE) -> Tensor:
    return param(np.zeros(n, dtype=dtype))


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = glorot(rng, out_dim, in_dim)
        self.bias = zeros(out_dim) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return linear_forward(x, self)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        if eps <= 0:
            raise ContractError("layer norm eps must be positive")
        self.gain = param(np.ones(dim, dtype=T.DEFAULT_DTYPE))
        self.bias = zeros(dim)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self)


# Aliases matching the parameter-set vocabulary used elsewhere.
LinearParams = Linear
LayerNormParams = LayerNorm


def linear_forward(x: Tensor, p: Linear) -> Tensor:
    """Affine map ``W x + b`` over the trailing axis, broadcast over the rest."""
    x = T.as_tensor(x)
    return T.linear(x, p.weight, p.bias)


def layer_norm(x: Tensor, p: LayerNorm) -> Tensor:
    x = T.as_tensor(x)
    if x.shape[-1] != p.gain.shape[0]:
        raise ContractError(f"layer_norm: dim {x.shape[-1]} != {p.gain.shape[0]}")
    return T.layer_norm(x, p.gain, p.bias, p.eps)


class FeedForward(Module):
    """Two dense layers with an activation after the first."""

    def __init__(self, d_in: int, hidden: int, d_out: int, rng: np.random.Generator, activation=T.gelu):
        self.fc1 = Linear(d_in, hidden, rng)
        self.fc2 = Linear(hidden, d_out, rng)
        self.activation = activation

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.activation(self.fc1(x)))
