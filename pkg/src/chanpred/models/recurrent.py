"""GRU and LSTM cells, stacked layers, and the LSTM direct-output predictor.

Every gate carries two bias vectors, one on the input side and one on the
recurrent side, the convention of common RNN libraries. In gate equations
written over a concatenated input the pair only ever appears as a sum.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..nn import tensor as T
from ..nn.layers import Linear, Module, glorot, zeros
from ..nn.tensor import ContractError, Tensor
from .base import Predictor


class GruParams(Module):
    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        self.input_dim, self.hidden_dim = input_dim, hidden_dim
        cat = input_dim + hidden_dim
        self.W_z = glorot(rng, hidden_dim, cat)
        self.W_r = glorot(rng, hidden_dim, cat)
        self.W_u = glorot(rng, hidden_dim, cat)
        self.b_z, self.b_z_rec = zeros(hidden_dim), zeros(hidden_dim)
        self.b_r, self.b_r_rec = zeros(hidden_dim), zeros(hidden_dim)
        self.b_u, self.b_u_rec = zeros(hidden_dim), zeros(hidden_dim)


def gru_cell(x, u_prev, p: GruParams, gates: dict | None = None) -> Tensor:
    """One GRU update.

    z = sigma(W_z [x, u] + b_z), r = sigma(W_r [x, u] + b_r),
    u_tilde = tanh(W_u [x, r*u] + b_u), u_new = (1 - z) u_tilde + z u.
    Pass a dict as ``gates`` to receive the z and r activations.
    """
    x, u_prev = T.as_tensor(x), T.as_tensor(u_prev)
    if x.shape[-1] != p.input_dim or u_prev.shape[-1] != p.hidden_dim:
        raise ContractError("gru_cell: input/hidden dims do not match parameters")
    xu = T.concat([x, u_prev], axis=-1)
    z = T.sigmoid(T.linear(xu, p.W_z, p.b_z) + p.b_z_rec)
    r = T.sigmoid(T.linear(xu, p.W_r, p.b_r) + p.b_r_rec)
    cand = T.tanh(T.linear(T.concat([x, r * u_prev], axis=-1), p.W_u, p.b_u) + p.b_u_rec)
    if gates is not None:
        gates["z"], gates["r"] = z.data, r.data
    return cand + z * (u_prev - cand)


class LstmParams(Module):
    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        self.input_dim, self.hidden_dim = input_dim, hidden_dim
        cat = input_dim + hidden_dim
        self.W_i = glorot(rng, hidden_dim, cat)
        self.W_f = glorot(rng, hidden_dim, cat)
        self.W_o = glorot(rng, hidden_dim, cat)
        self.W_c = glorot(rng, hidden_dim, cat)
        self.b_i, self.b_i_rec = zeros(hidden_dim), zeros(hidden_dim)
        self.b_f, self.b_f_rec = zeros(hidden_dim), zeros(hidden_dim)
        self.b_o, self.b_o_rec = zeros(hidden_dim), zeros(hidden_dim)
        self.b_c, self.b_c_rec = zeros(hidden_dim), zeros(hidden_dim)


def lstm_cell(x, u_prev, c_prev, p: LstmParams, gates: dict | None = None) -> tuple[Tensor, Tensor]:
    x, u_prev, c_prev = T.as_tensor(x), T.as_tensor(u_prev), T.as_tensor(c_prev)
    if x.shape[-1] != p.input_dim or u_prev.shape[-1] != p.hidden_dim:
        raise ContractError("lstm_cell: input/hidden dims do not match parameters")
    xu = T.concat([x, u_prev], axis=-1)
    i = T.sigmoid(T.linear(xu, p.W_i, p.b_i) + p.b_i_rec)
    f = T.sigmoid(T.linear(xu, p.W_f, p.b_f) + p.b_f_rec)
    o = T.sigmoid(T.linear(xu, p.W_o, p.b_o) + p.b_o_rec)
    c_tilde = T.tanh(T.linear(xu, p.W_c, p.b_c) + p.b_c_rec)
    c = f * c_prev + i * c_tilde
    if gates is not None:
        gates.update(i=i.data, f=f.data, o=o.data)
    return o * T.tanh(c), c


class GruStack(Module):
    def __init__(self, input_dim: int, hidden_dim: int, layers: int, rng: np.random.Generator):
        self.layers = [GruParams(input_dim if k == 0 else hidden_dim, hidden_dim, rng) for k in range(layers)]
        self.hidden_dim = hidden_dim

    def init_state(self, batch: int, dtype) -> list[Tensor]:
        return [T.as_tensor(np.zeros((batch, self.hidden_dim), dtype=dtype)) for _ in self.layers]

    def step(self, x: Tensor, state: list[Tensor]) -> list[Tensor]:
        new = []
        for p, u in zip(self.layers, state):
            x = gru_cell(x, u, p)
            new.append(x)
        return new

    def run(self, seq: Tensor, state: list[Tensor] | None = None) -> tuple[list[Tensor], list[Tensor]]:
        """Top-layer outputs for every step plus the final per-layer state."""
        seq = T.as_tensor(seq)
        state = state or self.init_state(seq.shape[0], seq.dtype)
        outs = []
        for t in range(seq.shape[1]):
            state = self.step(seq[:, t], state)
            outs.append(state[-1])
        return outs, state


class LstmStack(Module):
    def __init__(self, input_dim: int, hidden_dim: int, layers: int, rng: np.random.Generator):
        self.layers = [LstmParams(input_dim if k == 0 else hidden_dim, hidden_dim, rng) for k in range(layers)]
        self.hidden_dim = hidden_dim

    def run(self, seq: Tensor) -> Tensor:
        seq = T.as_tensor(seq)
        b = seq.shape[0]
        zero = np.zeros((b, self.hidden_dim), dtype=seq.dtype)
        u = [T.as_tensor(zero) for _ in self.layers]
        c = [T.as_tensor(zero) for _ in self.layers]
        for t in range(seq.shape[1]):
            x = seq[:, t]
            for k, p in enumerate(self.layers):
                u[k], c[k] = lstm_cell(x, u[k], c[k], p)
                x = u[k]
        return u[-1]


@dataclass
class LstmConfig:
    input_dim: int = 64
    hidden_dim: int = 128
    layers: int = 2
    delta: int = 4


class LstmPredictor(Predictor):
    """Encode the known slots, then one linear head emits ``delta`` slots."""

    family = "lstm"

    def __init__(self, cfg: LstmConfig | None = None, seed: int = 0):
        self.config = cfg = cfg or LstmConfig()
        rng = np.random.default_rng(seed)
        self.rnn = LstmStack(cfg.input_dim, cfg.hidden_dim, cfg.layers, rng)
        self.head = Linear(cfg.hidden_dim, cfg.input_dim * cfg.delta, rng)

    def forward(self, known) -> Tensor:
        known = T.as_tensor(known)
        y = self.head(self.rnn.run(known))
        return y.reshape(known.shape[0], self.config.delta, self.config.input_dim)

    def train_forward(self, known: Tensor, future: Tensor) -> Tensor:
        if T.as_tensor(future).shape[1] != self.config.delta:
            raise ContractError("LSTM head is trained for a fixed delta")
        return self.forward(known)

    def _predict(self, known: Tensor, delta: int) -> Tensor:
        # Short horizons keep the leading slots of the head output; long
        # horizons re-run on known + predicted slots until delta is covered.
        seq = known.data
        outs = []
        remaining = delta
        while remaining > 0:
            y = self.forward(seq).data[:, : min(remaining, self.config.delta)]
            outs.append(y)
            seq = np.concatenate([seq, y], axis=1)
            remaining -= y.shape[1]
        return T.as_tensor(np.concatenate(outs, axis=1))

    def config_dict(self) -> dict:
        return asdict(self.config)
