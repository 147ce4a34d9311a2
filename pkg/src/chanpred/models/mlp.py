from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..nn import tensor as T
from ..nn.layers import Linear
from ..nn.tensor import ContractError, Tensor
from .base import Predictor


@dataclass
class MlpConfig:
    input_dim: int = 64
    length: int = 16
    delta: int = 4
    hidden: int = 512


class MlpPredictor(Predictor):
    """Flattened history -> hidden (ReLU) -> all ``delta`` slots at once.

    The input width is fixed at construction, so only the trained
    ``(length, delta)`` pair (or a shorter horizon) is supported.
    """

    family = "mlp"

    def __init__(self, cfg: MlpConfig | None = None, seed: int = 0):
        self.config = cfg = cfg or MlpConfig()
        rng = np.random.default_rng(seed)
        self.fc1 = Linear(cfg.length * cfg.input_dim, cfg.hidden, rng)
        self.fc2 = Linear(cfg.hidden, cfg.delta * cfg.input_dim, rng)

    def supports(self, length: int, delta: int) -> bool:
        return length == self.config.length and 0 <= delta <= self.config.delta

    def forward(self, known) -> Tensor:
        known = T.as_tensor(known)
        b, length, d = known.shape
        if length * d != self.fc1.in_dim:
            raise ContractError(f"MLP expects {self.fc1.in_dim} inputs, got {length * d}")
        y = self.fc2(T.relu(self.fc1(known.reshape(b, length * d))))
        return y.reshape(b, self.config.delta, self.config.input_dim)

    def train_forward(self, known: Tensor, future: Tensor) -> Tensor:
        return self.forward(known)

    def _predict(self, known: Tensor, delta: int) -> Tensor:
        return self.forward(known)[:, :delta]

    def config_dict(self) -> dict:
        return asdict(self.config)
