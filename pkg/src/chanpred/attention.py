"""Multi-head attention, causal masks and sinusoidal position tables.

Layout note: sequences are stored row-major as ``(..., length, features)``.
Projection matrices keep the column-convention shapes (``W_q`` is
``H*d_attn x d_x`` and so on), so ``Q = X W_q^T`` here is the transpose of
``W_q X`` with tokens as columns. Masks use the context-by-query shape
``(l_z, l_x)`` where ``allowed[j, k]`` lets query ``k`` see context ``j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import tensor as T
from .nn.layers import Module, glorot
from .nn.tensor import ContractError, Tensor


class MhaParams(Module):
    """The four bias-free projections of one attention block."""

    def __init__(self, d_x: int, d_z: int, d_out: int, heads: int, d_attn: int, d_mid: int,
                 rng: np.random.Generator):
        self.heads, self.d_attn, self.d_mid = heads, d_attn, d_mid
        self.W_q = glorot(rng, heads * d_attn, d_x)
        self.W_k = glorot(rng, heads * d_attn, d_z)
        self.W_v = glorot(rng, heads * d_mid, d_z)
        self.W_o = glorot(rng, d_out, heads * d_mid)


@dataclass(frozen=True)
class AttentionMask:
    allowed: np.ndarray  # (l_z, l_x) bool

    @property
    def shape(self) -> tuple[int, int]:
        return self.allowed.shape


def causal_mask(length: int) -> AttentionMask:
    if length < 1:
        raise ContractError("causal_mask length must be >= 1")
    j = np.arange(length)[:, None]
    k = np.arange(length)[None, :]
    return AttentionMask(j <= k)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, length, width = x.shape
    x = x.reshape(*lead, length, heads, width // heads)
    return x.swapaxes(-3, -2)


def multi_head_attention(x: Tensor, z: Tensor, p: MhaParams, mask: AttentionMask | None = None) -> Tensor:
    """Multi-head (masked) attention of primary ``x`` over context ``z``.

    ``x``: ``(..., l_x, d_x)``; ``z``: ``(..., l_z, d_z)``; returns
    ``(..., l_x, d_out)``.
    """
    x, z = T.as_tensor(x), T.as_tensor(z)
    lx, lz = x.shape[-2], z.shape[-2]
    keep = None
    if mask is not None:
        if mask.shape != (lz, lx):
            raise ContractError(f"mask shape {mask.shape} != (l_z, l_x) = {(lz, lx)}")
        if not mask.allowed.any(axis=0).all():
            raise ContractError("mask leaves a query with no visible context")
        keep = mask.allowed.T  # (l_x, l_z), broadcast over batch and heads

    q = _split_heads(T.linear(x, p.W_q), p.heads)  # (..., H, l_x, d_attn)
    k = _split_heads(T.linear(z, p.W_k), p.heads)  # (..., H, l_z, d_attn)
    v = _split_heads(T.linear(z, p.W_v), p.heads)  # (..., H, l_z, d_mid)

    scores = T.matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(p.d_attn))
    weights = T.softmax(scores, axis=-1, mask=keep)
    mixed = T.matmul(weights, v).swapaxes(-3, -2)  # (..., l_x, H, d_mid)
    mixed = mixed.reshape(*mixed.shape[:-2], p.heads * p.d_mid)
    return T.linear(mixed, p.W_o)


@dataclass(frozen=True)
class PosEncoding:
    table: np.ndarray  # (seq_len, d_model), float64
    reversed: bool = False

    def __len__(self) -> int:
        return self.table.shape[0]


def _pe_table(seq_len: int, d_model: int) -> np.ndarray:
    if d_model % 2:
        raise ContractError("positional encoding needs an even d_model")
    if seq_len < 1:
        raise ContractError("positional encoding needs seq_len >= 1")
    pos = np.arange(seq_len, dtype=np.float64)[:, None]
    two_i = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, two_i / d_model)
    table = np.empty((seq_len, d_model), dtype=np.float64)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return table


def positional_encoding(seq_len: int, d_model: int) -> PosEncoding:
    return PosEncoding(_pe_table(seq_len, d_model), reversed=False)


def reverse_positional_encoding(seq_len: int, d_model: int) -> PosEncoding:
    """Same rows as :func:`positional_encoding`, last row first, so the most
    recent position always gets row 0."""
    return PosEncoding(_pe_table(seq_len, d_model)[::-1].copy(), reversed=True)


def reverse(pe: PosEncoding) -> PosEncoding:
    return PosEncoding(pe.table[::-1].copy(), reversed=not pe.reversed)
