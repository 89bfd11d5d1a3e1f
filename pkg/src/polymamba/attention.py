"""Space-frequency collaborative attention: local and global branches,
correlation gating, bidirectional cross-attention, and the fused block.

Layer norm is always over the channel axis at each spatial position.
Attention treats the h*w spatial positions as tokens and the channels as
the embedding, split across heads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frequency import HighFreqWeights, dwt2_haar, high_freq_features, low_freq_align
from .ops import (
    ConvParams,
    LayerNormParams,
    conv2d,
    depthwise_conv2d,
    layer_norm,
    sigmoid,
    silu,
    upsample_bilinear2,
)
from .scan import PolygonSpec
from .ssm import SelectiveProjection, ps_ss2d_selective


@dataclass
class AttentionConfig:
    num_heads: int
    head_dim: int
    ln_epsilon: float = 1e-5

    def __post_init__(self):
        if self.num_heads < 1 or self.head_dim < 1:
            raise ValueError("num_heads and head_dim must be >= 1")
        if self.ln_epsilon <= 0:
            raise ValueError("ln_epsilon must be positive")

    @property
    def channels(self) -> int:
        return self.num_heads * self.head_dim


@dataclass
class LocalBranchWeights:
    """1x1 entry, parallel 1x1/3x3/5x5 scales, then 1x1 squeeze (3c -> c) and 3x3 refine."""

    entry: ConvParams
    scale1: ConvParams
    scale3: ConvParams
    scale5: ConvParams
    squeeze: ConvParams
    refine: ConvParams


@dataclass
class GlobalBranchWeights:
    ln_in: LayerNormParams
    depth_weight: np.ndarray
    depth_bias: np.ndarray
    directions: list[SelectiveProjection]
    ln_out: LayerNormParams
    lin_weight: np.ndarray  # (c, c)
    lin_bias: np.ndarray  # (c,)


@dataclass
class GateWeights:
    ln_a: LayerNormParams
    ln_b: LayerNormParams
    refine1: ConvParams  # 1x1 on the single-channel correlation map
    refine3: ConvParams  # 3x3 refinement


@dataclass
class QkvWeights:
    """Shared per-position linear projections, applied to both branch inputs."""

    w_q: np.ndarray
    b_q: np.ndarray
    w_k: np.ndarray
    b_k: np.ndarray
    w_v: np.ndarray
    b_v: np.ndarray


@dataclass
class BcfmWeights:
    gate: GateWeights
    qkv: QkvWeights


@dataclass
class SfcamWeights:
    local: LocalBranchWeights
    global_: GlobalBranchWeights
    high: HighFreqWeights
    low: ConvParams
    bcfm_local_high: BcfmWeights
    bcfm_global_low: BcfmWeights
    fuse_squeeze: ConvParams  # 1x1, 4c -> c
    fuse_refine: ConvParams  # 3x3, c -> c


def softmax(v: np.ndarray) -> np.ndarray:
    """Max-subtracted exponential normalization of a vector."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"softmax expects a non-empty vector, got shape {v.shape}")
    e = np.exp(v - v.max())
    return e / e.sum()


def _softmax_rows(a: np.ndarray) -> np.ndarray:
    e = np.exp(a - a.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def local_branch(f_in: np.ndarray, w: LocalBranchWeights) -> np.ndarray:
    """Multi-scale local feature path; shape preserved by same padding."""
    base = conv2d(f_in, w.entry)
    cat = np.concatenate([conv2d(base, w.scale1), conv2d(base, w.scale3), conv2d(base, w.scale5)])
    return conv2d(conv2d(cat, w.squeeze), w.refine)


def global_branch(f_in: np.ndarray, w: GlobalBranchWeights, spec: PolygonSpec) -> np.ndarray:
    """Polygon-scan state-space path with a gated linear side branch.

    z = DWConv(LN(f_in)) is the shared local preprocessing; the scanned path
    is LN(ps_ss2d(z)), the gate is SiLU(Linear(LN(f_in))), and z doubles as
    the residual.
    """
    normed = layer_norm(f_in, w.ln_in)
    z = depthwise_conv2d(normed, w.depth_weight, w.depth_bias)
    x1 = layer_norm(ps_ss2d_selective(z, spec, w.directions), w.ln_out)
    c, h, wd = f_in.shape
    seq = normed.reshape(c, h * wd).T
    x2 = silu(np.einsum("lc,cd->ld", seq, w.lin_weight) + w.lin_bias).T.reshape(c, h, wd)
    return x1 * x2 + z


def correlation_gate(f_a: np.ndarray, f_b: np.ndarray, w: GateWeights, channel_reduce: str = "mean"):
    """Spatial agreement gate shared by both inputs.

    The normalized maps are multiplied elementwise, collapsed over channels
    (mean by default; "prod" gives the literal per-channel product, which
    underflows for wide maps), refined by 1x1 then 3x3 convs, and squashed.
    Returns (f_a_hat, f_b_hat, gate_map) with f_hat = f * gate + f.
    """
    if f_a.shape != f_b.shape:
        raise ValueError(f"shapes disagree: {f_a.shape} vs {f_b.shape}")
    prod = layer_norm(f_a, w.ln_a) * layer_norm(f_b, w.ln_b)
    if channel_reduce == "mean":
        collapsed = prod.mean(axis=0, keepdims=True)
    elif channel_reduce == "prod":
        collapsed = prod.prod(axis=0, keepdims=True)
    else:
        raise ValueError(f"channel_reduce must be 'mean' or 'prod', got {channel_reduce!r}")
    gate = sigmoid(conv2d(conv2d(collapsed, w.refine1), w.refine3))
    return f_a * gate + f_a, f_b * gate + f_b, gate


def _project_tokens(f: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    c, h, wd = f.shape
    seq = f.reshape(c, h * wd).T  # (L, C)
    return np.einsum("lc,cd->ld", seq, w) + b


def cross_attention(f_q_src: np.ndarray, f_kv_src: np.ndarray, cfg: AttentionConfig, w: QkvWeights) -> np.ndarray:
    """Multi-head attention with queries from one map, keys/values from the other.

    Scores are scaled by sqrt(head_dim); heads are contiguous channel blocks.
    """
    if f_q_src.shape != f_kv_src.shape:
        raise ValueError(f"shapes disagree: {f_q_src.shape} vs {f_kv_src.shape}")
    c, h, wd = f_q_src.shape
    if cfg.channels != c:
        raise ValueError(f"num_heads*head_dim = {cfg.channels} but feature has {c} channels")
    length = h * wd
    q = _project_tokens(f_q_src, w.w_q, w.b_q).reshape(length, cfg.num_heads, cfg.head_dim)
    k = _project_tokens(f_kv_src, w.w_k, w.b_k).reshape(length, cfg.num_heads, cfg.head_dim)
    v = _project_tokens(f_kv_src, w.w_v, w.b_v).reshape(length, cfg.num_heads, cfg.head_dim)
    scores = np.einsum("qnd,knd->nqk", q, k) / np.sqrt(cfg.head_dim)
    attn = _softmax_rows(scores)
    out = np.einsum("nqk,knd->qnd", attn, v)  # (L, heads, d)
    return out.reshape(length, c).T.reshape(c, h, wd)


def bcfm(f_a: np.ndarray, f_b: np.ndarray, cfg: AttentionConfig, w: BcfmWeights, channel_reduce: str = "mean"):
    """Bidirectional cross-attention fusion of two aligned feature maps.

    Both inputs pass the shared correlation gate, then attend to each other
    with swapped query sources; each output is named after its query source.
    """
    a_hat, b_hat, _ = correlation_gate(f_a, f_b, w.gate, channel_reduce)
    a_cross = cross_attention(a_hat, b_hat, cfg, w.qkv)
    b_cross = cross_attention(b_hat, a_hat, cfg, w.qkv)
    return a_cross, b_cross


def _match_size(f: np.ndarray, h: int, w: int) -> np.ndarray:
    """Bilinear 2x upsample, then trim the odd-dimension padding."""
    up = upsample_bilinear2(f)
    return up[:, :h, :w]


def sfcam(
    f_in: np.ndarray,
    weights: SfcamWeights,
    spec: PolygonSpec,
    cfg: AttentionConfig,
    channel_reduce: str = "mean",
) -> np.ndarray:
    """Full space-frequency collaborative attention block; shape preserved.

    Local, global, and wavelet branches run on f_in; (local, high) and
    (global, low) pairs fuse bidirectionally; the four cross outputs are
    concatenated, squeezed by a 1x1 conv, residual-added, refined by a 3x3
    conv, and residual-added again.
    """
    c, h, w = f_in.shape
    f_local = local_branch(f_in, weights.local)
    f_global = global_branch(f_in, weights.global_, spec)
    bands = dwt2_haar(f_in)
    f_high = _match_size(high_freq_features(bands, weights.high), h, w)
    f_low = _match_size(low_freq_align(bands.ll, weights.low), h, w)
    local_cross, high_cross = bcfm(f_local, f_high, cfg, weights.bcfm_local_high, channel_reduce)
    global_cross, low_cross = bcfm(f_global, f_low, cfg, weights.bcfm_global_low, channel_reduce)
    cat = np.concatenate([local_cross, high_cross, global_cross, low_cross])
    fused = conv2d(cat, weights.fuse_squeeze) + f_in
    return conv2d(fused, weights.fuse_refine) + f_in
