"""Toy UNet assembly with a polygon-scan state-space bottleneck and
space-frequency attention on the skip connections, trained derivative-free.

Parameters live in one flat float32 vector (ParamStore) addressed by name;
all forward math is float64 and avoids BLAS reductions, so outputs are
byte-identical across runs and thread counts. Training is plain SPSA: two
forward evaluations per step along a random sign vector.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import attention as attn
from .data_io import TENSOR_MAGIC as _TENSOR_MAGIC
from .data_io import MalformedFileError
from .frequency import HighFreqWeights
from .ops import ConvParams, LayerNormParams, conv2d, layer_norm, maxpool2, sigmoid, silu, upsample_nearest2
from .scan import PolygonSpec
from .ssm import SelectiveProjection

_CKPT_MAGIC = b"PMCK"

# softplus(dt_bias) == 0.05, the middle of the intended initial step range
_DT_BIAS = math.log(math.expm1(0.05))


@dataclass(frozen=True)
class ModelConfig:
    levels: int = 3
    base_channels: int = 8
    polygon: PolygonSpec = field(default_factory=PolygonSpec)
    state_dim: int = 8
    num_heads: int = 2
    ln_epsilon: float = 1e-5
    seed: int = 0
    use_ps_vss: bool = True
    use_sfcam: bool = True

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.base_channels < 1:
            raise ValueError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.state_dim < 1:
            raise ValueError(f"state_dim must be >= 1, got {self.state_dim}")
        if self.base_channels % self.num_heads != 0:
            raise ValueError(
                f"num_heads {self.num_heads} must divide base_channels {self.base_channels}"
            )

    @property
    def channels(self) -> list[int]:
        """Encoder channel counts per level, shallow to deep."""
        return [self.base_channels * 2**i for i in range(self.levels)]

    @property
    def bottleneck_channels(self) -> int:
        return self.base_channels * 2**self.levels

    def attention_for(self, channels: int) -> attn.AttentionConfig:
        return attn.AttentionConfig(
            num_heads=self.num_heads,
            head_dim=channels // self.num_heads,
            ln_epsilon=self.ln_epsilon,
        )


class ParamStore:
    """Flat float32 parameter vector with a name -> (offset, shape) index."""

    def __init__(self, vector: np.ndarray, index: dict[str, tuple[int, tuple[int, ...]]]):
        self.vector = np.asarray(vector, dtype=np.float32)
        self.index = index

    @property
    def n_params(self) -> int:
        return int(self.vector.size)

    def get(self, name: str) -> np.ndarray:
        offset, shape = self.index[name]
        n = int(np.prod(shape, dtype=np.int64))
        return self.vector[offset : offset + n].astype(np.float64).reshape(shape)

    def set(self, name: str, value: np.ndarray) -> None:
        offset, shape = self.index[name]
        n = int(np.prod(shape, dtype=np.int64))
        self.vector[offset : offset + n] = np.asarray(value, dtype=np.float32).reshape(n)

    def with_vector(self, vector: np.ndarray) -> "ParamStore":
        vector = np.asarray(vector, dtype=np.float32)
        if vector.shape != self.vector.shape:
            raise ValueError(f"vector shape {vector.shape} != {self.vector.shape}")
        return ParamStore(vector.copy(), self.index)

    def copy(self) -> "ParamStore":
        return ParamStore(self.vector.copy(), self.index)


class _InitAlloc:
    """Records the layout while drawing initial values from a seeded rng."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.entries: list[tuple[str, np.ndarray]] = []

    def __call__(self, name: str, shape: tuple[int, ...], kind: str) -> np.ndarray:
        if kind == "zeros":
            arr = np.zeros(shape)
        elif kind == "ones":
            arr = np.ones(shape)
        elif kind == "fan_in":
            if len(shape) == 4:
                fan = shape[1] * shape[2] * shape[3]
            elif len(shape) == 3:
                fan = shape[1] * shape[2]  # depthwise kernel
            elif len(shape) == 2:
                fan = shape[0]
            else:
                raise ValueError(f"no fan-in rule for shape {shape}")
            bound = 1.0 / math.sqrt(fan)
            arr = self.rng.uniform(-bound, bound, size=shape)
        elif kind == "ssm_a":
            ch, state = shape
            arr = -np.tile(np.arange(1.0, state + 1.0), (ch, 1))
        elif kind == "dt_bias":
            arr = np.full(shape, _DT_BIAS)
        else:
            raise ValueError(f"unknown init kind {kind!r}")
        self.entries.append((name, arr))
        return arr


class _BindAlloc:
    """Fetches arrays for an existing store."""

    def __init__(self, store: ParamStore):
        self.store = store

    def __call__(self, name: str, shape: tuple[int, ...], kind: str) -> np.ndarray:
        arr = self.store.get(name)
        if arr.shape != shape:
            raise ValueError(f"{name}: stored shape {arr.shape} != expected {shape}")
        return arr


def _conv(alloc, name, c_out, c_in, k) -> ConvParams:
    return ConvParams(
        weight=alloc(f"{name}.w", (c_out, c_in, k, k), "fan_in"),
        bias=alloc(f"{name}.b", (c_out,), "zeros"),
    )


def _ln(alloc, name, c, eps) -> LayerNormParams:
    return LayerNormParams(
        gamma=alloc(f"{name}.g", (c,), "ones"),
        beta=alloc(f"{name}.beta", (c,), "zeros"),
        eps=eps,
    )


def _depthwise(alloc, name, c, k=3):
    return (
        alloc(f"{name}.w", (c, k, k), "fan_in"),
        alloc(f"{name}.b", (c,), "zeros"),
    )


def _linear(alloc, name, c_in, c_out):
    return (
        alloc(f"{name}.w", (c_in, c_out), "fan_in"),
        alloc(f"{name}.b", (c_out,), "zeros"),
    )


def _projection(alloc, name, c, s) -> SelectiveProjection:
    return SelectiveProjection(
        w_b=alloc(f"{name}.w_b", (c, s), "fan_in"),
        w_c=alloc(f"{name}.w_c", (c, s), "fan_in"),
        w_dt=alloc(f"{name}.w_dt", (c, c), "fan_in"),
        b_dt=alloc(f"{name}.b_dt", (c,), "dt_bias"),
        A=alloc(f"{name}.a", (c, s), "ssm_a"),
        D=alloc(f"{name}.d", (c,), "ones"),
    )


def _global_branch(alloc, name, c, s, eps) -> attn.GlobalBranchWeights:
    dw_w, dw_b = _depthwise(alloc, f"{name}.dw", c)
    lin_w, lin_b = _linear(alloc, f"{name}.lin", c, c)
    return attn.GlobalBranchWeights(
        ln_in=_ln(alloc, f"{name}.ln_in", c, eps),
        depth_weight=dw_w,
        depth_bias=dw_b,
        directions=[_projection(alloc, f"{name}.dir{d}", c, s) for d in range(4)],
        ln_out=_ln(alloc, f"{name}.ln_out", c, eps),
        lin_weight=lin_w,
        lin_bias=lin_b,
    )


def _local_branch(alloc, name, c) -> attn.LocalBranchWeights:
    return attn.LocalBranchWeights(
        entry=_conv(alloc, f"{name}.entry", c, c, 1),
        scale1=_conv(alloc, f"{name}.s1", c, c, 1),
        scale3=_conv(alloc, f"{name}.s3", c, c, 3),
        scale5=_conv(alloc, f"{name}.s5", c, c, 5),
        squeeze=_conv(alloc, f"{name}.squeeze", c, 3 * c, 1),
        refine=_conv(alloc, f"{name}.refine", c, c, 3),
    )


def _high_freq(alloc, name, c) -> HighFreqWeights:
    dw_w, dw_b = _depthwise(alloc, f"{name}.dw", c)
    return HighFreqWeights(
        reduce=_conv(alloc, f"{name}.reduce", c, 3 * c, 1),
        depth_weight=dw_w,
        depth_bias=dw_b,
        mix=_conv(alloc, f"{name}.mix", c, c, 1),
        point=_conv(alloc, f"{name}.point", c, c, 1),
    )


def _gate(alloc, name, c, eps) -> attn.GateWeights:
    return attn.GateWeights(
        ln_a=_ln(alloc, f"{name}.ln_a", c, eps),
        ln_b=_ln(alloc, f"{name}.ln_b", c, eps),
        refine1=_conv(alloc, f"{name}.r1", 1, 1, 1),
        refine3=_conv(alloc, f"{name}.r3", 1, 1, 3),
    )


def _qkv(alloc, name, c) -> attn.QkvWeights:
    wq, bq = _linear(alloc, f"{name}.q", c, c)
    wk, bk = _linear(alloc, f"{name}.k", c, c)
    wv, bv = _linear(alloc, f"{name}.v", c, c)
    return attn.QkvWeights(w_q=wq, b_q=bq, w_k=wk, b_k=bk, w_v=wv, b_v=bv)


def _bcfm(alloc, name, c, eps) -> attn.BcfmWeights:
    return attn.BcfmWeights(gate=_gate(alloc, f"{name}.gate", c, eps), qkv=_qkv(alloc, f"{name}.qkv", c))


def _sfcam(alloc, name, c, s, eps) -> attn.SfcamWeights:
    return attn.SfcamWeights(
        local=_local_branch(alloc, f"{name}.local", c),
        global_=_global_branch(alloc, f"{name}.global", c, s, eps),
        high=_high_freq(alloc, f"{name}.high", c),
        low=_conv(alloc, f"{name}.low", c, c, 1),
        bcfm_local_high=_bcfm(alloc, f"{name}.bcfm_lh", c, eps),
        bcfm_global_low=_bcfm(alloc, f"{name}.bcfm_gl", c, eps),
        fuse_squeeze=_conv(alloc, f"{name}.fuse1", c, 4 * c, 1),
        fuse_refine=_conv(alloc, f"{name}.fuse2", c, c, 3),
    )


@dataclass
class ConvBlockWeights:
    conv1: ConvParams
    ln1: LayerNormParams
    conv2: ConvParams
    ln2: LayerNormParams


def _conv_block(alloc, name, c_in, c_out, eps) -> ConvBlockWeights:
    return ConvBlockWeights(
        conv1=_conv(alloc, f"{name}.c1", c_out, c_in, 3),
        ln1=_ln(alloc, f"{name}.ln1", c_out, eps),
        conv2=_conv(alloc, f"{name}.c2", c_out, c_out, 3),
        ln2=_ln(alloc, f"{name}.ln2", c_out, eps),
    )


@dataclass
class ModelWeights:
    encoders: list[ConvBlockWeights]
    bottleneck: ConvBlockWeights
    vss: attn.GlobalBranchWeights | None
    skips: list[attn.SfcamWeights] | None
    decoders: list[ConvBlockWeights]
    final: ConvParams


def _build(cfg: ModelConfig, alloc) -> ModelWeights:
    eps = cfg.ln_epsilon
    chans = cfg.channels
    encoders = []
    c_prev = 1
    for i, c in enumerate(chans):
        encoders.append(_conv_block(alloc, f"enc{i}", c_prev, c, eps))
        c_prev = c
    cb = cfg.bottleneck_channels
    bottleneck = _conv_block(alloc, "bottleneck", c_prev, cb, eps)
    vss = _global_branch(alloc, "vss", cb, cfg.state_dim, eps) if cfg.use_ps_vss else None
    skips = (
        [_sfcam(alloc, f"skip{i}", c, cfg.state_dim, eps) for i, c in enumerate(chans)]
        if cfg.use_sfcam
        else None
    )
    decoders = []
    c_up = cb
    for i in reversed(range(cfg.levels)):
        decoders.append(_conv_block(alloc, f"dec{i}", c_up + chans[i], chans[i], eps))
        c_up = chans[i]
    final = _conv(alloc, "final", 1, chans[0], 1)
    return ModelWeights(encoders, bottleneck, vss, skips, decoders, final)


def init_params(cfg: ModelConfig) -> ParamStore:
    """Deterministic parameter store for the config's seed.

    Conv and linear weights are uniform scaled by fan-in, biases zero, layer
    norm affine (1, 0), state matrices -(1..state_dim) per channel, and the
    step-size bias set so the initial softplus output is 0.05.
    """
    alloc = _InitAlloc(np.random.default_rng(cfg.seed))
    _build(cfg, alloc)
    index = {}
    chunks = []
    offset = 0
    for name, arr in alloc.entries:
        index[name] = (offset, tuple(arr.shape))
        chunks.append(np.asarray(arr, dtype=np.float32).reshape(-1))
        offset += arr.size
    vector = np.concatenate(chunks) if chunks else np.empty(0, np.float32)
    return ParamStore(vector, index)


def bind_weights(cfg: ModelConfig, store: ParamStore) -> ModelWeights:
    return _build(cfg, _BindAlloc(store))


def _run_block(x: np.ndarray, w: ConvBlockWeights) -> np.ndarray:
    x = silu(layer_norm(conv2d(x, w.conv1), w.ln1))
    return silu(layer_norm(conv2d(x, w.conv2), w.ln2))


def forward(image: np.ndarray, params: ParamStore, cfg: ModelConfig) -> np.ndarray:
    """Probability map (1, h, w) for an input image (1, h, w).

    h and w must be divisible by 2**levels; callers pad (see
    data_io.pad_to_multiple).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 1:
        raise ValueError(f"expected (1, h, w), got {image.shape}")
    _, h, w = image.shape
    factor = 2**cfg.levels
    if h % factor or w % factor:
        raise ValueError(f"spatial dims {h}x{w} must be divisible by {factor}")
    weights = bind_weights(cfg, params)
    x = image
    skips = []
    for enc in weights.encoders:
        x = _run_block(x, enc)
        skips.append(x)
        x = maxpool2(x)
    x = _run_block(x, weights.bottleneck)
    if weights.vss is not None:
        x = attn.global_branch(x, weights.vss, cfg.polygon)
    for step, dec in enumerate(weights.decoders):
        level = cfg.levels - 1 - step
        skip = skips[level]
        if weights.skips is not None:
            skip = attn.sfcam(
                skip, weights.skips[level], cfg.polygon, cfg.attention_for(skip.shape[0])
            )
        x = upsample_nearest2(x)
        x = _run_block(np.concatenate([x, skip]), dec)
    logits = conv2d(x, weights.final)
    return sigmoid(logits)


def bce_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean binary cross-entropy; predictions clamped to [1e-7, 1 - 1e-7]."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shapes disagree: {pred.shape} vs {target.shape}")
    p = np.clip(pred, 1e-7, 1.0 - 1e-7)
    return float(-(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)).mean())


def dataset_loss(dataset, params: ParamStore, cfg: ModelConfig) -> float:
    """Mean BCE of the forward pass over a list of SamplePairs."""
    losses = [bce_loss(forward(pair.image, params, cfg), pair.mask) for pair in dataset]
    return float(np.mean(losses))


def spsa_minimize(
    loss_fn,
    x0: np.ndarray,
    steps: int,
    step_size: float,
    perturb_size: float,
    seed: int = 0,
):
    """Simultaneous-perturbation minimizer over a flat float64 vector.

    Classic decaying gains a_k = step_size / (k + 1 + 0.1*steps)^0.602 and
    c_k = perturb_size / (k + 1)^0.101; the gradient along a Rademacher
    direction is estimated from two evaluations. Returns (x, trace) where
    trace[k] is the mean of the two evaluations at step k.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    rng = np.random.default_rng(seed)
    stability = 0.1 * steps
    trace = []
    for k in range(steps):
        a_k = step_size / (k + 1.0 + stability) ** 0.602
        c_k = perturb_size / (k + 1.0) ** 0.101
        delta = rng.integers(0, 2, size=x.size).astype(np.float64) * 2.0 - 1.0
        loss_plus = loss_fn(x + c_k * delta)
        loss_minus = loss_fn(x - c_k * delta)
        if not (math.isfinite(loss_plus) and math.isfinite(loss_minus)):
            raise RuntimeError(
                f"non-finite loss at step {k}: plus={loss_plus}, minus={loss_minus}"
            )
        ghat = (loss_plus - loss_minus) / (2.0 * c_k) * delta
        x -= a_k * ghat
        trace.append(0.5 * (loss_plus + loss_minus))
    return x, trace


def spsa_train(
    dataset,
    params: ParamStore,
    cfg: ModelConfig,
    steps: int,
    step_size: float = 0.5,
    perturb_size: float = 0.05,
    seed: int | None = None,
):
    """SPSA training of the network on a list of SamplePairs.

    Deterministic given the seed (defaults to cfg.seed); returns the updated
    store and the per-step loss trace. steps=0 returns the input store
    untouched.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    if steps == 0:
        return params, []

    def loss_fn(vec: np.ndarray) -> float:
        return dataset_loss(dataset, params.with_vector(vec.astype(np.float32)), cfg)

    x, trace = spsa_minimize(
        loss_fn,
        params.vector.astype(np.float64),
        steps=steps,
        step_size=step_size,
        perturb_size=perturb_size,
        seed=cfg.seed if seed is None else seed,
    )
    return params.with_vector(x.astype(np.float32)), trace


# --- checkpoint and config text formats ---------------------------------

_CONFIG_KEYS = (
    "base_channels",
    "levels",
    "ln_epsilon",
    "n_sides",
    "num_heads",
    "scale_step",
    "seed",
    "state_dim",
    "theta",
    "use_ps_vss",
    "use_sfcam",
)


def config_to_text(cfg: ModelConfig) -> str:
    values = {
        "base_channels": cfg.base_channels,
        "levels": cfg.levels,
        "ln_epsilon": repr(cfg.ln_epsilon),
        "n_sides": cfg.polygon.n_sides,
        "num_heads": cfg.num_heads,
        "scale_step": repr(cfg.polygon.scale_step),
        "seed": cfg.seed,
        "state_dim": cfg.state_dim,
        "theta": repr(cfg.polygon.theta),
        "use_ps_vss": "true" if cfg.use_ps_vss else "false",
        "use_sfcam": "true" if cfg.use_sfcam else "false",
    }
    return "".join(f"{k}={values[k]}\n" for k in _CONFIG_KEYS)


def config_from_text(text: str) -> ModelConfig:
    fields = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno} is not key=value: {line!r}")
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()
    unknown = set(fields) - set(_CONFIG_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    def get(key, conv, default):
        return conv(fields[key]) if key in fields else default

    as_bool = lambda s: {"true": True, "false": False}[s.lower()]
    polygon = PolygonSpec(
        n_sides=get("n_sides", int, 5),
        theta=get("theta", float, 0.0),
        scale_step=get("scale_step", float, 1.0),
    )
    return ModelConfig(
        levels=get("levels", int, 3),
        base_channels=get("base_channels", int, 8),
        polygon=polygon,
        state_dim=get("state_dim", int, 8),
        num_heads=get("num_heads", int, 2),
        ln_epsilon=get("ln_epsilon", float, 1e-5),
        seed=get("seed", int, 0),
        use_ps_vss=get("use_ps_vss", as_bool, True),
        use_sfcam=get("use_sfcam", as_bool, True),
    )


def save_checkpoint(path, store: ParamStore, cfg: ModelConfig) -> None:
    """Magic, config-block length, canonical config text, flat vector as a tensor file body."""
    config = config_to_text(cfg).encode("ascii")
    vec = store.vector
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(config)))
        fh.write(config)
        fh.write(_TENSOR_MAGIC)
        fh.write(struct.pack("B", 1))
        fh.write(struct.pack("<I", vec.size))
        fh.write(np.ascontiguousarray(vec, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Returns (store, cfg); raises MalformedFileError on format violations."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _CKPT_MAGIC:
        raise MalformedFileError(f"bad magic {data[:4]!r}, expected {_CKPT_MAGIC!r}", offset=0)
    if len(data) < 8:
        raise MalformedFileError("truncated config length", offset=len(data))
    (config_len,) = struct.unpack("<I", data[4:8])
    if len(data) < 8 + config_len:
        raise MalformedFileError("truncated config block", offset=len(data))
    cfg = config_from_text(data[8 : 8 + config_len].decode("ascii"))
    body = data[8 + config_len :]
    pos = 8 + config_len
    if body[:4] != _TENSOR_MAGIC or len(body) < 9:
        raise MalformedFileError("bad parameter tensor header", offset=pos)
    if body[4] != 1:
        raise MalformedFileError(f"parameter tensor must be rank 1, got {body[4]}", offset=pos + 4)
    (n,) = struct.unpack("<I", body[5:9])
    if len(body) - 9 != 4 * n:
        raise MalformedFileError(
            f"parameter payload: need {4 * n} bytes, have {len(body) - 9}", offset=len(data)
        )
    vector = np.frombuffer(body, dtype="<f4", count=n, offset=9).copy()
    template = init_params(cfg)
    if vector.size != template.n_params:
        raise MalformedFileError(
            f"checkpoint has {vector.size} parameters, config implies {template.n_params}",
            offset=pos,
        )
    return template.with_vector(vector), cfg


def micro_config(seed: int = 0, n_sides: int = 5) -> ModelConfig:
    """Smallest practical config (about 1.2k parameters), used by the
    training smoke tests and the shape ablation harness."""
    return ModelConfig(
        levels=1,
        base_channels=2,
        polygon=PolygonSpec(n_sides=n_sides),
        state_dim=2,
        num_heads=1,
        seed=seed,
    )
