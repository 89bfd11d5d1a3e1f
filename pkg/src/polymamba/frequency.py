"""Orthonormal 2D Haar analysis/synthesis and the frequency feature paths.

Per 2x2 block [[a, b], [c, d]] the four orthonormal subband samples are
LL=(a+b+c+d)/2, LH=(a-b+c-d)/2, HL=(a+b-c-d)/2, HH=(a-b-c+d)/2, so energy
is preserved on even-dimensioned inputs and reconstruction is exact. Odd
dimensions are reflect-padded to even before analysis and trimmed back by
synthesis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import ConvParams, conv2d, depthwise_conv2d


@dataclass
class WaveletSubbands:
    """The four Haar subbands of a (c, h, w) map, each (c, ceil(h/2), ceil(w/2))."""

    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray
    orig_height: int = 0
    orig_width: int = 0


@dataclass
class HighFreqWeights:
    """Conv chain over the concatenated detail bands: 1x1 reduce (3c -> c),
    depthwise 3x3, 1x1 mix, 1x1 pointwise."""

    reduce: ConvParams
    depth_weight: np.ndarray
    depth_bias: np.ndarray
    mix: ConvParams
    point: ConvParams


def dwt2_haar(x: np.ndarray) -> WaveletSubbands:
    """One-level orthonormal Haar analysis of x (c, h, w)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.size == 0:
        raise ValueError(f"input must be a non-empty (c, h, w) tensor, got shape {x.shape}")
    _, h, w = x.shape
    if h % 2 or w % 2:
        x = np.pad(x, ((0, 0), (0, h % 2), (0, w % 2)), mode="reflect")
    a = x[:, 0::2, 0::2]
    b = x[:, 0::2, 1::2]
    c = x[:, 1::2, 0::2]
    d = x[:, 1::2, 1::2]
    return WaveletSubbands(
        ll=(a + b + c + d) / 2.0,
        lh=(a - b + c - d) / 2.0,
        hl=(a + b - c - d) / 2.0,
        hh=(a - b - c + d) / 2.0,
        orig_height=h,
        orig_width=w,
    )


def idwt2_haar(s: WaveletSubbands) -> np.ndarray:
    """Exact inverse of dwt2_haar; trims the reflect padding of odd originals."""
    shapes = {arr.shape for arr in (s.ll, s.lh, s.hl, s.hh)}
    if len(shapes) != 1:
        raise ValueError(f"subband shapes disagree: {sorted(shapes)}")
    ch, sh, sw = s.ll.shape
    a = (s.ll + s.lh + s.hl + s.hh) / 2.0
    b = (s.ll - s.lh + s.hl - s.hh) / 2.0
    c = (s.ll + s.lh - s.hl - s.hh) / 2.0
    d = (s.ll - s.lh - s.hl + s.hh) / 2.0
    out = np.empty((ch, 2 * sh, 2 * sw))
    out[:, 0::2, 0::2] = a
    out[:, 0::2, 1::2] = b
    out[:, 1::2, 0::2] = c
    out[:, 1::2, 1::2] = d
    h = s.orig_height or 2 * sh
    w = s.orig_width or 2 * sw
    return out[:, :h, :w]


def high_freq_features(s: WaveletSubbands, weights: HighFreqWeights) -> np.ndarray:
    """Detail-band feature path at subband resolution.

    Channel-concatenates LH, HL, HH and applies the 1x1 / depthwise-3x3 /
    1x1 / pointwise chain back down to c channels.
    """
    cat = np.concatenate([s.lh, s.hl, s.hh], axis=0)
    if weights.reduce.weight.shape[1] != cat.shape[0]:
        raise ValueError(
            f"reduce conv expects {weights.reduce.weight.shape[1]} channels, got {cat.shape[0]}"
        )
    y = conv2d(cat, weights.reduce)
    y = depthwise_conv2d(y, weights.depth_weight, weights.depth_bias)
    y = conv2d(y, weights.mix)
    return conv2d(y, weights.point)


def low_freq_align(ll: np.ndarray, weights: ConvParams) -> np.ndarray:
    """1x1 channel alignment of the approximation band."""
    if weights.weight.shape[1] != ll.shape[0]:
        raise ValueError(f"conv expects {weights.weight.shape[1]} channels, got {ll.shape[0]}")
    return conv2d(ll, weights)
