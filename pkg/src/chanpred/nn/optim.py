from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .tensor import Tensor


class TrainingError(RuntimeError):
    """Non-finite values reached the optimiser."""


@dataclass(frozen=True)
class AdamState:
    first_moment: tuple[np.ndarray, ...]
    second_moment: tuple[np.ndarray, ...]
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")

    @classmethod
    def init(cls, params: Sequence[np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
             beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(
            first_moment=tuple(np.zeros_like(p) for p in params),
            second_moment=tuple(np.zeros_like(p) for p in params),
            step_count=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps,
        )


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
              state: AdamState) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update. Inputs are never modified."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ValueError("params, grads and Adam accumulators differ in length")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient passed to adam_step")

    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch in adam_step: {p.shape} vs {g.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        update = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_params.append((p - update).astype(p.dtype, copy=False))
        new_m.append(m.astype(p.dtype, copy=False))
        new_v.append(v.astype(p.dtype, copy=False))
    return new_params, replace(state, first_moment=tuple(new_m), second_moment=tuple(new_v), step_count=t)


@dataclass
class Adam:
    """Stateful wrapper that applies :func:`adam_step` to tensors in place."""

    params: list[Tensor]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    state: AdamState = field(init=False)

    def __post_init__(self):
        self.state = AdamState.init([p.data for p in self.params], self.lr, self.beta1, self.beta2, self.eps)

    def step(self, grads: dict[Tensor, np.ndarray]) -> None:
        g = [grads[p] if p in grads else np.zeros_like(p.data) for p in self.params]
        new, self.state = adam_step([p.data for p in self.params], g, self.state)
        for p, arr in zip(self.params, new):
            p.data = arr
