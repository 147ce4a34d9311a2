"""Hot loops with a numba implementation and a numpy twin.

The public names dispatch on :data:`chanpred._accel.USE_NUMBA`; both
variants are importable directly for testing and benchmarking.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, njit


# -- sum-of-sinusoids channel synthesis ------------------------------------
def synthesize_numpy(gains: np.ndarray, steering: np.ndarray, omega: np.ndarray,
                     phase: np.ndarray, n_slot: int, t_slot: float) -> np.ndarray:
    """h[f, i, m] = P^-1/2 sum_p g[f,p] a[f,p,m] exp(j (omega[f,p] i T + phase[f,p]))."""
    n_paths = gains.shape[1]
    t = np.arange(n_slot, dtype=np.float64) * t_slot
    rot = np.exp(1j * (omega[:, None, :] * t[None, :, None] + phase[:, None, :]))  # (F, N, P)
    coef = rot * gains[:, None, :] / np.sqrt(n_paths)
    return np.einsum("fnp,fpm->fnm", coef, steering)


@njit(cache=True)
def _synthesize_numba(gains, steering, omega, phase, n_slot, t_slot):
    n_frames, n_paths = gains.shape
    n_ant = steering.shape[2]
    out = np.zeros((n_frames, n_slot, n_ant), dtype=np.complex128)
    scale = 1.0 / np.sqrt(n_paths)
    for f in range(n_frames):
        for i in range(n_slot):
            t = i * t_slot
            for p in range(n_paths):
                ang = omega[f, p] * t + phase[f, p]
                c = gains[f, p] * (np.cos(ang) + 1j * np.sin(ang)) * scale
                for m in range(n_ant):
                    out[f, i, m] += c * steering[f, p, m]
    return out


def synthesize_numba(gains, steering, omega, phase, n_slot, t_slot):
    return _synthesize_numba(np.ascontiguousarray(gains, dtype=np.complex128),
                             np.ascontiguousarray(steering, dtype=np.complex128),
                             np.ascontiguousarray(omega, dtype=np.float64),
                             np.ascontiguousarray(phase, dtype=np.float64),
                             int(n_slot), float(t_slot))


# -- lagged design matrix for autoregressive fits ---------------------------
def lag_matrix_numpy(seqs: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``[x_{t-order}, ..., x_{t-1}, 1]`` and targets ``x_t`` for every
    sequence and every ``t >= order``."""
    n, length, d = seqs.shape
    steps = length - order
    win = np.lib.stride_tricks.sliding_window_view(seqs, order, axis=1)[:, :steps]  # (n, steps, d, order)
    feats = np.swapaxes(win, -1, -2).reshape(n * steps, order * d)
    design = np.concatenate([feats, np.ones((n * steps, 1), dtype=seqs.dtype)], axis=1)
    targets = seqs[:, order:].reshape(n * steps, d)
    return design, targets


@njit(cache=True)
def _lag_matrix_numba(seqs, order):
    n, length, d = seqs.shape
    steps = length - order
    design = np.empty((n * steps, order * d + 1), dtype=seqs.dtype)
    targets = np.empty((n * steps, d), dtype=seqs.dtype)
    row = 0
    for s in range(n):
        for t in range(order, length):
            for k in range(order):
                for j in range(d):
                    design[row, k * d + j] = seqs[s, t - order + k, j]
            design[row, order * d] = 1.0
            for j in range(d):
                targets[row, j] = seqs[s, t, j]
            row += 1
    return design, targets


def lag_matrix_numba(seqs: np.ndarray, order: int):
    return _lag_matrix_numba(np.ascontiguousarray(seqs), int(order))


synthesize = synthesize_numba if USE_NUMBA else synthesize_numpy
lag_matrix = lag_matrix_numba if USE_NUMBA else lag_matrix_numpy


# -- GeLU (exact) -----------------------------------------------------------
_INV_SQRT2 = 0.7071067811865476
_INV_SQRT2PI = 0.3989422804014327


def gelu_numpy(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(x * Phi(x), d/dx)`` for the exact Gaussian-CDF GeLU."""
    from scipy.special import erf

    xd = x.astype(np.float64)
    cdf = 0.5 * (1.0 + erf(xd * _INV_SQRT2))
    deriv = cdf + xd * _INV_SQRT2PI * np.exp(-0.5 * xd * xd)
    return (xd * cdf).astype(x.dtype), deriv.astype(x.dtype)


@njit(cache=True)
def _gelu_numba(flat, out, deriv):
    for i in range(flat.size):
        v = np.float64(flat[i])
        c = 0.5 * (1.0 + math.erf(v * _INV_SQRT2))
        out[i] = v * c
        deriv[i] = c + v * _INV_SQRT2PI * math.exp(-0.5 * v * v)


def gelu_numba(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    flat = np.ascontiguousarray(x).reshape(-1)
    out = np.empty_like(flat)
    deriv = np.empty_like(flat)
    _gelu_numba(flat, out, deriv)
    return out.reshape(x.shape), deriv.reshape(x.shape)


# -- layer norm over the trailing axis ---------------------------------------
def layer_norm_fwd_numpy(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float):
    """Return ``(out, xhat, inv_std)``; ``inv_std`` has a trailing axis of 1."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return (xhat * gain + bias).astype(x.dtype, copy=False), xhat, inv


def layer_norm_bwd_numpy(g: np.ndarray, xhat: np.ndarray, inv: np.ndarray, gain: np.ndarray):
    """Return ``(grad_x, grad_gain, grad_bias)``."""
    d = xhat.shape[-1]
    gxhat = g * gain
    gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                - xhat * (gxhat * xhat).sum(axis=-1, keepdims=True) / d)
    lead = tuple(range(g.ndim - 1))
    return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)


@njit(cache=True)
def _ln_fwd(x2, gain, bias, eps, out, xhat, inv):
    n, d = x2.shape
    for r in range(n):
        mu = 0.0
        for j in range(d):
            mu += x2[r, j]
        mu /= d
        var = 0.0
        for j in range(d):
            c = x2[r, j] - mu
            var += c * c
        var /= d
        s = 1.0 / np.sqrt(var + eps)
        inv[r] = s
        for j in range(d):
            xh = (x2[r, j] - mu) * s
            xhat[r, j] = xh
            out[r, j] = xh * gain[j] + bias[j]


@njit(cache=True)
def _ln_bwd(g2, xhat, inv, gain, gx, ggain, gbias):
    n, d = g2.shape
    for r in range(n):
        m1 = 0.0
        m2 = 0.0
        for j in range(d):
            gh = g2[r, j] * gain[j]
            m1 += gh
            m2 += gh * xhat[r, j]
            ggain[j] += g2[r, j] * xhat[r, j]
            gbias[j] += g2[r, j]
        m1 /= d
        m2 /= d
        for j in range(d):
            gx[r, j] = inv[r] * (g2[r, j] * gain[j] - m1 - xhat[r, j] * m2)


def layer_norm_fwd_numba(x, gain, bias, eps):
    d = x.shape[-1]
    x2 = np.ascontiguousarray(x).reshape(-1, d)
    out = np.empty_like(x2)
    xhat = np.empty_like(x2)
    inv = np.empty(x2.shape[0], dtype=x2.dtype)
    _ln_fwd(x2, gain.astype(x2.dtype), bias.astype(x2.dtype), x2.dtype.type(eps), out, xhat, inv)
    lead = x.shape[:-1]
    return out.reshape(x.shape), xhat.reshape(x.shape), inv.reshape(*lead, 1)


def layer_norm_bwd_numba(g, xhat, inv, gain):
    d = g.shape[-1]
    g2 = np.ascontiguousarray(g).reshape(-1, d)
    gx = np.empty_like(g2)
    ggain = np.zeros(d, dtype=g2.dtype)
    gbias = np.zeros(d, dtype=g2.dtype)
    _ln_bwd(g2, np.ascontiguousarray(xhat).reshape(-1, d), np.ascontiguousarray(inv).reshape(-1),
            gain.astype(g2.dtype), gx, ggain, gbias)
    return gx.reshape(g.shape), ggain, gbias


gelu = gelu_numba if USE_NUMBA else gelu_numpy
layer_norm_fwd = layer_norm_fwd_numba if USE_NUMBA else layer_norm_fwd_numpy
layer_norm_bwd = layer_norm_bwd_numba if USE_NUMBA else layer_norm_bwd_numpy
