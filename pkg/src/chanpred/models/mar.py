"""Multivariate autoregressive predictor fitted by ordinary least squares."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _kernels
from ..nn.tensor import ContractError
from .base import UnsupportedLength

RIDGE = 1e-8


@dataclass
class MarModel:
    """x_t = intercept + sum_k A_k x_{t-k}, k = 1..order.

    ``coefs[k - 1]`` holds ``A_k`` with shape ``(D, D)``.
    """

    coefs: np.ndarray
    intercept: np.ndarray
    meta: dict = field(default_factory=dict)

    family = "mar"
    trainable = False

    @property
    def order(self) -> int:
        return self.coefs.shape[0]

    def supports(self, length: int, delta: int) -> bool:
        return length >= self.order and delta >= 0

    def step(self, history: np.ndarray) -> np.ndarray:
        """One-step prediction from the last ``order`` rows of ``(B, l, D)``."""
        out = np.broadcast_to(self.intercept, (history.shape[0], self.intercept.size)).copy()
        for k in range(1, self.order + 1):
            out += history[:, -k] @ self.coefs[k - 1].T
        return out

    def predict(self, known, delta: int) -> np.ndarray:
        x = np.asarray(known, dtype=np.float64)
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
        if not self.supports(x.shape[1], delta):
            raise UnsupportedLength(f"MAR of order {self.order} cannot run at l={x.shape[1]}")
        outs = []
        for _ in range(delta):
            y = self.step(x)
            outs.append(y)
            x = np.concatenate([x, y[:, None]], axis=1)
        out = np.stack(outs, axis=1) if outs else np.zeros((x.shape[0], 0, x.shape[2]))
        return out[0] if squeeze else out

    def num_parameters(self) -> int:
        return int(self.coefs.size + self.intercept.size)

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {"coefs": self.coefs, "intercept": self.intercept}


def mar_fit(seqs: np.ndarray, order: int) -> MarModel:
    """Least-squares fit of an order-``order`` model on ``(n, length, D)`` data.

    Every window ``t >= order`` of every sequence contributes one regression
    row. A rank-deficient design falls back to a tiny ridge penalty and
    records that in ``meta``.
    """
    seqs = np.asarray(seqs, dtype=np.float64)
    if seqs.ndim == 2:
        seqs = seqs[:, :, None]
    if order < 1:
        raise ContractError("MAR order must be >= 1")
    if seqs.shape[0] < 1 or seqs.shape[1] < order + 1:
        raise ContractError(f"need at least one sequence with >= {order + 1} snapshots")
    d = seqs.shape[2]
    design, targets = _kernels.lag_matrix(seqs, order)
    sol, _, rank, _ = np.linalg.lstsq(design, targets, rcond=None)
    meta = {"rows": int(design.shape[0]), "rank": int(rank), "ridge": False}
    if rank < design.shape[1]:
        gram = design.T @ design + RIDGE * np.eye(design.shape[1])
        sol = np.linalg.solve(gram, design.T @ targets)
        meta["ridge"] = True
    # design column block j holds x_{t-order+j}, i.e. lag order-j
    blocks = sol[:-1].reshape(order, d, d)  # (position, in, out)
    coefs = np.stack([blocks[order - k].T for k in range(1, order + 1)])
    return MarModel(coefs=coefs, intercept=sol[-1].copy(), meta=meta)
