"""Encoder-decoder transformer predictors.

Both stacks are pre-norm: every attention or MLP block reads a layer-normed
copy of the residual stream and adds its output back. A final layer norm
closes each stack and a linear head maps decoder states back to snapshot
space. ``encoder_pe="reversed"`` gives Transformer-RPE, ``"standard"`` the
vanilla variant. :class:`TransformerParallel` reuses the same blocks but
decodes all future slots in one pass from zero placeholders.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from ..attention import (
    MhaParams,
    causal_mask,
    multi_head_attention,
    positional_encoding,
    reverse_positional_encoding,
)
from ..nn import tensor as T
from ..nn.layers import FeedForward, LayerNorm, Linear, Module
from ..nn.tensor import ContractError, Tensor
from .base import Predictor, UnsupportedLength


@dataclass
class TransformerConfig:
    input_dim: int = 64
    d_model: int = 64
    heads: int = 4
    d_attn: int = 16
    d_mid: int = 16
    mlp_hidden: int = 128
    enc_layers: int = 2
    dec_layers: int = 2
    encoder_pe: str = "reversed"
    # Transformer-Parallel only
    parallel_prefix: int = 8
    parallel_causal_mask: bool = True

    def __post_init__(self):
        if self.encoder_pe not in ("reversed", "standard"):
            raise ContractError(f"encoder_pe must be 'reversed' or 'standard', got {self.encoder_pe!r}")
        if self.d_model % 2:
            raise ContractError("d_model must be even")


@lru_cache(maxsize=64)
def _pe(length: int, d_model: int, reversed_: bool) -> np.ndarray:
    enc = reverse_positional_encoding if reversed_ else positional_encoding
    table = enc(length, d_model).table
    table.setflags(write=False)
    return table


class EncoderLayer(Module):
    def __init__(self, cfg: TransformerConfig, rng: np.random.Generator):
        d = cfg.d_model
        self.ln_attn = LayerNorm(d)
        self.self_attn = MhaParams(d, d, d, cfg.heads, cfg.d_attn, cfg.d_mid, rng)
        self.ln_mlp = LayerNorm(d)
        self.mlp = FeedForward(d, cfg.mlp_hidden, d, rng)

    def __call__(self, h: Tensor) -> Tensor:
        a = self.ln_attn(h)
        h = h + multi_head_attention(a, a, self.self_attn)
        return h + self.mlp(self.ln_mlp(h))


class DecoderLayer(Module):
    def __init__(self, cfg: TransformerConfig, rng: np.random.Generator):
        d = cfg.d_model
        self.ln_self = LayerNorm(d)
        self.self_attn = MhaParams(d, d, d, cfg.heads, cfg.d_attn, cfg.d_mid, rng)
        self.ln_cross = LayerNorm(d)
        self.cross_attn = MhaParams(d, d, d, cfg.heads, cfg.d_attn, cfg.d_mid, rng)
        self.ln_mlp = LayerNorm(d)
        self.mlp = FeedForward(d, cfg.mlp_hidden, d, rng)

    def __call__(self, y: Tensor, memory: Tensor, mask) -> Tensor:
        a = self.ln_self(y)
        y = y + multi_head_attention(a, a, self.self_attn, mask)
        y = y + multi_head_attention(self.ln_cross(y), memory, self.cross_attn)
        return y + self.mlp(self.ln_mlp(y))


class TransformerPredictor(Predictor):
    family = "transformer-rpe"

    def __init__(self, cfg: TransformerConfig | None = None, seed: int = 0):
        self.config = cfg = cfg or TransformerConfig()
        self.family = "transformer-rpe" if cfg.encoder_pe == "reversed" else "transformer"
        rng = np.random.default_rng(seed)
        self.enc_in = Linear(cfg.input_dim, cfg.d_model, rng)
        self.encoder = [EncoderLayer(cfg, rng) for _ in range(cfg.enc_layers)]
        self.enc_norm = LayerNorm(cfg.d_model)
        self.dec_in = Linear(cfg.input_dim, cfg.d_model, rng)
        self.decoder = [DecoderLayer(cfg, rng) for _ in range(cfg.dec_layers)]
        self.dec_norm = LayerNorm(cfg.d_model)
        self.head = Linear(cfg.d_model, cfg.input_dim, rng)

    def encoder_position_bias(self, length: int) -> np.ndarray:
        """Rows added to the embedded encoder inputs, oldest snapshot first."""
        return _pe(length, self.config.d_model, self.config.encoder_pe == "reversed")

    def encode(self, known) -> Tensor:
        x = T.as_tensor(known)
        if x.shape[-2] < 1:
            raise ContractError("encoder needs at least one snapshot")
        pe = self.encoder_position_bias(x.shape[-2]).astype(self.dtype)
        h = self.enc_in(x) + pe
        for layer in self.encoder:
            h = layer(h)
        return self.enc_norm(h)

    def decode(self, memory: Tensor, dec_in, mask: bool = True) -> Tensor:
        """All decoder positions in one pass; with ``mask`` position k only
        sees decoder inputs 0..k."""
        y_in = T.as_tensor(dec_in)
        n = y_in.shape[-2]
        y = self.dec_in(y_in) + _pe(n, self.config.d_model, False).astype(self.dtype)
        m = causal_mask(n) if mask else None
        for layer in self.decoder:
            y = layer(y, memory, m)
        return self.head(self.dec_norm(y))

    def decode_teacher_forced(self, memory: Tensor, dec_in) -> Tensor:
        return self.decode(memory, dec_in, mask=True)

    def train_forward(self, known: Tensor, future: Tensor) -> Tensor:
        known, future = T.as_tensor(known), T.as_tensor(future)
        dec_in = np.concatenate([known.data[:, -1:], future.data[:, :-1]], axis=1)
        return self.decode(self.encode(known), dec_in)

    def _predict(self, known: Tensor, delta: int) -> Tensor:
        memory = self.encode(known)
        steps = [known.data[:, -1]]
        outs = []
        for _ in range(delta):
            y = self.decode(memory, np.stack(steps, axis=1)).data[:, -1]
            outs.append(y)
            steps.append(y)
        return T.as_tensor(np.stack(outs, axis=1))

    def config_dict(self) -> dict:
        return asdict(self.config)


class TransformerParallel(TransformerPredictor):
    """Decoder input is the last ``parallel_prefix`` known snapshots followed
    by ``delta`` all-zero slots; the trailing outputs are the predictions."""

    family = "transformer-parallel"

    def __init__(self, cfg: TransformerConfig | None = None, seed: int = 0):
        cfg = cfg or TransformerConfig(encoder_pe="standard")
        super().__init__(cfg, seed)
        self.family = "transformer-parallel"

    def supports(self, length: int, delta: int) -> bool:
        return length >= self.config.parallel_prefix and delta >= 0

    def forward(self, known, delta: int) -> Tensor:
        known = T.as_tensor(known)
        p = self.config.parallel_prefix
        if known.shape[1] < p:
            raise UnsupportedLength(f"transformer-parallel needs l >= {p}, got {known.shape[1]}")
        b, _, d = known.shape
        dec_in = np.concatenate([known.data[:, -p:], np.zeros((b, delta, d), dtype=known.dtype)], axis=1)
        out = self.decode(self.encode(known), dec_in, mask=self.config.parallel_causal_mask)
        return out[:, p:]

    def train_forward(self, known: Tensor, future: Tensor) -> Tensor:
        return self.forward(known, T.as_tensor(future).shape[1])

    def _predict(self, known: Tensor, delta: int) -> Tensor:
        return self.forward(known, delta)
