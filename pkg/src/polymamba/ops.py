"""Shared dense-array primitives: convolutions, normalization, activations, resampling.

Everything is plain numpy in float64. All reductions use fixed orders and
none of the kernels dispatch to BLAS, so results are identical regardless
of thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ConvParams:
    """Dense 2D convolution: weight (c_out, c_in, kh, kw), bias (c_out,)."""

    weight: np.ndarray
    bias: np.ndarray


@dataclass
class LayerNormParams:
    """Affine for channel-axis layer norm: gamma (c,), beta (c,)."""

    gamma: np.ndarray
    beta: np.ndarray
    eps: float = 1e-5


def conv2d(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Same-padded (zeros) 2D convolution of x (c_in, h, w) -> (c_out, h, w).

    Odd kernel sizes only. Implemented as shift-and-accumulate so no large
    im2col buffer is materialized.
    """
    w = p.weight
    c_out, c_in, kh, kw = w.shape
    if x.ndim != 3 or x.shape[0] != c_in:
        raise ValueError(f"expected input with {c_in} channels, got shape {x.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("even kernel sizes are not supported")
    h, wd = x.shape[1], x.shape[2]
    xp = np.pad(x, ((0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    out = np.zeros((c_out, h, wd))
    for i in range(kh):
        for j in range(kw):
            out += np.einsum("oi,ihw->ohw", w[:, :, i, j], xp[:, i : i + h, j : j + wd])
    return out + p.bias[:, None, None]


def depthwise_conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Per-channel same-padded convolution: weight (c, kh, kw), bias (c,)."""
    c, kh, kw = weight.shape
    if x.ndim != 3 or x.shape[0] != c:
        raise ValueError(f"expected input with {c} channels, got shape {x.shape}")
    h, wd = x.shape[1], x.shape[2]
    xp = np.pad(x, ((0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    out = np.zeros_like(x, dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            out += weight[:, i, j][:, None, None] * xp[:, i : i + h, j : j + wd]
    return out + bias[:, None, None]


def layer_norm(x: np.ndarray, p: LayerNormParams) -> np.ndarray:
    """Normalize over the channel axis at every spatial position, then affine."""
    if x.shape[0] != p.gamma.shape[0]:
        raise ValueError(f"expected {p.gamma.shape[0]} channels, got shape {x.shape}")
    mean = x.mean(axis=0, keepdims=True)
    var = x.var(axis=0, keepdims=True)
    return (x - mean) / np.sqrt(var + p.eps) * p.gamma[:, None, None] + p.beta[:, None, None]


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def maxpool2(x: np.ndarray) -> np.ndarray:
    """2x2 max pooling; spatial dims must be even."""
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    return x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))


def upsample_nearest2(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def upsample_bilinear2(x: np.ndarray) -> np.ndarray:
    """Bilinear 2x upsampling with half-pixel (align_corners=False) sampling."""
    c, h, w = x.shape

    def axis_sample(n_in, n_out):
        src = (np.arange(n_out) + 0.5) / 2.0 - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = src - lo
        return lo, hi, frac

    r_lo, r_hi, r_f = axis_sample(h, 2 * h)
    c_lo, c_hi, c_f = axis_sample(w, 2 * w)
    top = x[:, r_lo, :] * (1.0 - r_f)[None, :, None] + x[:, r_hi, :] * r_f[None, :, None]
    out = top[:, :, c_lo] * (1.0 - c_f)[None, None, :] + top[:, :, c_hi] * c_f[None, None, :]
    return out
