"""GRU encoder-decoder with attention over (reversed) encoder outputs."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..nn import tensor as T
from ..nn.layers import Linear
from ..nn.tensor import ContractError, Tensor
from .base import Predictor
from .recurrent import GruStack

ATTENTION_ORDERS = ("reversed", "forward", "last")


@dataclass
class Seq2SeqConfig:
    input_dim: int = 64
    hidden_dim: int = 128
    layers: int = 2
    max_len: int = 20
    # "reversed": logit k weights the k-th most recent encoder output.
    # "forward": logit k weights encoder output k (oldest first), the
    #   non-reversed ablation.
    # "last": the last l logits weight the unreversed outputs.
    attention_order: str = "reversed"

    def __post_init__(self):
        if self.attention_order not in ATTENTION_ORDERS:
            raise ContractError(f"attention_order must be one of {ATTENTION_ORDERS}")


def pairing(length: int, max_len: int, order: str) -> list[tuple[int, int]]:
    """(logit index, encoder position) pairs used by ``seq2seq_attend``.

    Encoder positions count from 0 = oldest to ``length - 1`` = most recent.
    """
    if length > max_len:
        raise ContractError(f"sequence length {length} exceeds max_len {max_len}")
    if order == "reversed":
        return [(k, length - 1 - k) for k in range(length)]
    if order == "forward":
        return [(k, k) for k in range(length)]
    return [(max_len - length + k, k) for k in range(length)]


def seq2seq_attend(x: Tensor, u: Tensor, enc_outputs: Tensor, attn: Linear, max_len: int,
                   order: str = "reversed") -> Tensor:
    """Attention context over ``enc_outputs`` (``(B, l, hidden)``, oldest first)."""
    x, u, enc = T.as_tensor(x), T.as_tensor(u), T.as_tensor(enc_outputs)
    length = enc.shape[1]
    if length > max_len:
        raise ContractError(f"sequence length {length} exceeds max_len {max_len}")
    logits = attn(T.concat([x, u], axis=-1))
    if order == "last":
        logits = logits[:, max_len - length:]
    else:
        logits = logits[:, :length]
    w = T.softmax(logits, axis=-1)
    if order == "reversed":
        enc = enc[:, ::-1]
    b = w.shape[0]
    return T.matmul(w.reshape(b, 1, length), enc).reshape(b, enc.shape[2])


class Seq2SeqAttnR(Predictor):
    family = "seq2seq-attn-r"

    def __init__(self, cfg: Seq2SeqConfig | None = None, seed: int = 0):
        self.config = cfg = cfg or Seq2SeqConfig()
        self.family = "seq2seq-attn-r" if cfg.attention_order != "forward" else "seq2seq-attn"
        rng = np.random.default_rng(seed)
        d, h = cfg.input_dim, cfg.hidden_dim
        self.encoder = GruStack(d, h, cfg.layers, rng)
        self.decoder = GruStack(d, h, cfg.layers, rng)
        self.attn_linear = Linear(d + h, cfg.max_len, rng)
        self.combine_linear = Linear(d + h, d, rng)
        self.out_linear = Linear(h, d, rng)

    def supports(self, length: int, delta: int) -> bool:
        return 1 <= length <= self.config.max_len and delta >= 0

    def encode(self, known) -> tuple[Tensor, list[Tensor]]:
        known = T.as_tensor(known)
        if known.shape[1] > self.config.max_len:
            raise ContractError(f"sequence length {known.shape[1]} exceeds max_len {self.config.max_len}")
        outs, state = self.encoder.run(known)
        return T.stack(outs, axis=1), state

    def decode_step(self, x: Tensor, state: list[Tensor], enc: Tensor) -> tuple[Tensor, list[Tensor]]:
        x = T.as_tensor(x)
        ctx = seq2seq_attend(x, state[-1], enc, self.attn_linear, self.config.max_len,
                             self.config.attention_order)
        g_in = T.relu(self.combine_linear(T.concat([x, ctx], axis=-1)))
        state = self.decoder.step(g_in, state)
        return self.out_linear(state[-1]), state

    def decode(self, enc: Tensor, state: list[Tensor], inputs: list) -> Tensor:
        """Run the decoder over the given per-step inputs (teacher forcing)."""
        outs = []
        for x in inputs:
            y, state = self.decode_step(x, state, enc)
            outs.append(y)
        return T.stack(outs, axis=1)

    def train_forward(self, known: Tensor, future: Tensor) -> Tensor:
        known, future = T.as_tensor(known), T.as_tensor(future)
        enc, state = self.encode(known)
        inputs = [known.data[:, -1]] + [future.data[:, t] for t in range(future.shape[1] - 1)]
        return self.decode(enc, state, inputs)

    def _predict(self, known: Tensor, delta: int) -> Tensor:
        enc, state = self.encode(known)
        x = known.data[:, -1]
        outs = []
        for _ in range(delta):
            y, state = self.decode_step(x, state, enc)
            x = y.data
            outs.append(x)
        return T.as_tensor(np.stack(outs, axis=1))

    def config_dict(self) -> dict:
        return asdict(self.config)
