from __future__ import annotations

from typing import ClassVar

import numpy as np

from ..nn import tensor as T
from ..nn.layers import Module
from ..nn.tensor import ContractError, Tensor


class UnsupportedLength(ContractError):
    """The model family cannot run at the requested (l, delta)."""


def as_batch(known) -> tuple[Tensor, bool]:
    """Promote ``(l, D)`` to ``(1, l, D)``; report whether we did."""
    arr = known.data if isinstance(known, Tensor) else np.asarray(known)
    if arr.ndim == 2:
        return T.as_tensor(arr[None]), True
    if arr.ndim != 3:
        raise ContractError(f"expected (l, D) or (B, l, D), got shape {arr.shape}")
    return (known if isinstance(known, Tensor) else T.as_tensor(arr)), False


class Predictor(Module):
    """Common surface of the trainable predictors.

    ``train_forward(known, future)`` returns predictions for ``future``'s
    slots under the family's training regime (teacher forcing where the
    family has a decoder). ``predict(known, delta)`` is the test-time path.
    """

    family: ClassVar[str] = ""
    trainable: ClassVar[bool] = True

    def supports(self, length: int, delta: int) -> bool:
        return length >= 1 and delta >= 0

    def train_forward(self, known: Tensor, future: Tensor) -> Tensor:
        raise NotImplementedError

    def _predict(self, known: Tensor, delta: int) -> Tensor:
        raise NotImplementedError

    def predict(self, known, delta: int) -> np.ndarray:
        x, squeeze = as_batch(known)
        x = T.as_tensor(x.data.astype(self.dtype, copy=False))
        if not self.supports(x.shape[1], delta):
            raise UnsupportedLength(f"{self.family} cannot run at l={x.shape[1]}, delta={delta}")
        with T.no_grad():
            if delta == 0:
                out = np.zeros((x.shape[0], 0, x.shape[2]), dtype=self.dtype)
            else:
                out = self._predict(x, delta).data
        if not np.all(np.isfinite(out)):
            raise FloatingPointError(f"{self.family} produced non-finite predictions")
        return out[0] if squeeze else out

    @property
    def dtype(self):
        params = self.parameters()
        return params[0].data.dtype if params else T.DEFAULT_DTYPE

    def config_dict(self) -> dict:
        return dict(vars(self.config)) if hasattr(self, "config") else {}
