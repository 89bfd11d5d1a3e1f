"""Tensor and netpbm file formats, synthetic vessel images, tiling augmentation.

Tensor files: magic "PMT1", one rank byte (1..4), rank little-endian uint32
dims, then row-major float32 payload. Round trips are bit-exact, including
negative zero.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

TENSOR_MAGIC = b"PMT1"
_MAX_RANK = 4


class MalformedFileError(Exception):
    """File violates a format contract; offset is where the violation was found."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass
class SamplePair:
    """A grayscale image in [0, 1] and its binary mask, both (1, h, w)."""

    image: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.image.shape != self.mask.shape:
            raise ValueError(f"image {self.image.shape} and mask {self.mask.shape} disagree")
        if self.image.ndim != 3 or self.image.shape[0] != 1:
            raise ValueError(f"expected (1, h, w) tensors, got {self.image.shape}")
        if not np.isin(self.mask, (0.0, 1.0)).all():
            raise ValueError("mask must contain only 0 and 1")


def write_tensor(path, t: np.ndarray) -> None:
    t = np.asarray(t)
    if not 1 <= t.ndim <= _MAX_RANK:
        raise ValueError(f"tensor rank must be 1..{_MAX_RANK}, got {t.ndim}")
    payload = np.ascontiguousarray(t, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("B", t.ndim))
        fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
        fh.write(payload)


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != TENSOR_MAGIC:
        raise MalformedFileError(f"bad magic {data[:4]!r}, expected {TENSOR_MAGIC!r}", offset=0)
    if len(data) < 5:
        raise MalformedFileError("missing rank byte", offset=len(data))
    rank = data[4]
    if not 1 <= rank <= _MAX_RANK:
        raise MalformedFileError(f"rank {rank} outside 1..{_MAX_RANK}", offset=4)
    header = 5 + 4 * rank
    if len(data) < header:
        raise MalformedFileError("truncated dims", offset=len(data))
    dims = struct.unpack(f"<{rank}I", data[5:header])
    need = 4 * int(np.prod(dims, dtype=np.int64))
    if len(data) - header < need:
        raise MalformedFileError(
            f"truncated payload: need {need} bytes, have {len(data) - header}",
            offset=len(data),
        )
    if len(data) - header > need:
        raise MalformedFileError("trailing bytes after payload", offset=header + need)
    arr = np.frombuffer(data, dtype="<f4", count=need // 4, offset=header)
    return arr.reshape(dims).copy()


def read_pgm(path) -> np.ndarray:
    """Binary P5 with maxval 255, mapped to a (1, h, w) tensor in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()

    pos = 0

    def token():
        nonlocal pos
        while pos < len(data):
            ch = data[pos : pos + 1]
            if ch == b"#":
                nl = data.find(b"\n", pos)
                pos = len(data) if nl < 0 else nl + 1
            elif ch.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedFileError("unexpected end of header", offset=start)
        return data[start:pos], start

    magic, off = token()
    if magic != b"P5":
        raise MalformedFileError(f"bad magic {magic!r}, expected b'P5'", offset=off)
    vals = []
    for name in ("width", "height", "maxval"):
        tok, off = token()
        if not tok.isdigit():
            raise MalformedFileError(f"non-numeric {name}: {tok!r}", offset=off)
        vals.append(int(tok))
    width, height, maxval = vals
    if width < 1 or height < 1:
        raise MalformedFileError(f"degenerate size {width}x{height}", offset=off)
    if maxval != 255:
        raise MalformedFileError(f"only maxval 255 is supported, got {maxval}", offset=off)
    pos += 1  # single whitespace byte before the raster
    need = width * height
    if len(data) - pos < need:
        raise MalformedFileError(f"truncated raster: need {need} bytes", offset=len(data))
    raster = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    return (raster.astype(np.float64) / 255.0).reshape(1, height, width)


def write_ppm(path, rgb: np.ndarray) -> None:
    """Binary P6, maxval 255, no comments, single-space header separators."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ValueError(f"expected (3, h, w), got {rgb.shape}")
    _, h, w = rgb.shape
    bytes_ = np.floor(np.clip(rgb, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6 {w} {h} 255\n".encode("ascii"))
        fh.write(np.moveaxis(bytes_, 0, 2).tobytes())


def pad_to_multiple(t: np.ndarray, multiple: int):
    """Reflect-pad the trailing spatial dims of (c, h, w) up to a multiple.

    Returns (padded, (orig_h, orig_w)).
    """
    c, h, w = t.shape
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph or pw:
        t = np.pad(t, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    return t, (h, w)


def _stamp_disk(mask: np.ndarray, row: float, col: float, radius: float) -> None:
    size = mask.shape[0]
    r0 = max(int(math.floor(row - radius)), 0)
    r1 = min(int(math.ceil(row + radius)), size - 1)
    c0 = max(int(math.floor(col - radius)), 0)
    c1 = min(int(math.ceil(col + radius)), size - 1)
    if r1 < r0 or c1 < c0:
        return
    rr, cc = np.mgrid[r0 : r1 + 1, c0 : c1 + 1]
    hit = (rr - row) ** 2 + (cc - col) ** 2 <= radius * radius
    mask[r0 : r1 + 1, c0 : c1 + 1] |= hit


_BLUR_TAPS = None


def _blur(img: np.ndarray) -> np.ndarray:
    # 7-tap separable gaussian, sigma 1, reflect edges
    global _BLUR_TAPS
    if _BLUR_TAPS is None:
        taps = np.exp(-0.5 * (np.arange(-3, 4) ** 2))
        _BLUR_TAPS = taps / taps.sum()
    out = img
    for axis in (0, 1):
        padded = np.pad(out, [(3, 3) if a == axis else (0, 0) for a in (0, 1)], mode="reflect")
        acc = np.zeros_like(out)
        for k in range(7):
            sl = [slice(None)] * 2
            sl[axis] = slice(k, k + out.shape[axis])
            acc += _BLUR_TAPS[k] * padded[tuple(sl)]
        out = acc
    return out


def synth_vessels(
    seed: int,
    size: int = 64,
    n_branches: int = 3,
    thickness_range: tuple[float, float] = (1.0, 2.5),
    noise_sigma: float = 0.05,
) -> SamplePair:
    """Deterministic synthetic vessel-like image/mask pair.

    Branching random-walk strokes of varying thickness form the mask; the
    image is the blurred mask over a brightness gradient plus gaussian
    noise, clamped to [0, 1].
    """
    if size < 16:
        raise ValueError(f"size must be >= 16, got {size}")
    if n_branches < 0:
        raise ValueError(f"n_branches must be >= 0, got {n_branches}")
    lo, hi = thickness_range
    if not (0 < lo <= hi):
        raise ValueError(f"bad thickness range {thickness_range}")
    rng = np.random.default_rng(seed)
    mask = np.zeros((size, size), dtype=bool)
    trail: list[tuple[float, float]] = []
    for branch in range(n_branches):
        if branch == 0 or not trail:
            row = size / 2.0 + rng.uniform(-size / 6.0, size / 6.0)
            col = size / 2.0 + rng.uniform(-size / 6.0, size / 6.0)
        else:
            row, col = trail[int(rng.integers(len(trail)))]
        ang = rng.uniform(0.0, 2.0 * math.pi)
        thick = rng.uniform(lo, hi)
        steps = int(size * rng.uniform(1.5, 2.5))
        for _ in range(steps):
            _stamp_disk(mask, row, col, thick / 2.0)
            trail.append((row, col))
            ang += rng.normal(0.0, 0.22)
            thick = float(np.clip(thick * rng.uniform(0.985, 1.005), 0.6 * lo, hi))
            nrow = row + math.sin(ang)
            ncol = col + math.cos(ang)
            if not (1.0 <= nrow <= size - 2.0 and 1.0 <= ncol <= size - 2.0):
                # bounce back toward the interior instead of ending the stroke
                ang = math.atan2(size / 2.0 - row, size / 2.0 - col) + rng.normal(0.0, 0.5)
                nrow = row + math.sin(ang)
                ncol = col + math.cos(ang)
            row, col = nrow, ncol
    grid = np.arange(size, dtype=np.float64)
    bg = 0.25 + 0.3 * (grid[:, None] + grid[None, :]) / (2.0 * max(size - 1, 1))
    img = bg + 0.45 * _blur(mask.astype(np.float64))
    img = img + rng.normal(0.0, noise_sigma, size=(size, size))
    img = np.clip(img, 0.0, 1.0)
    return SamplePair(image=img[None], mask=mask[None].astype(np.float64))


def tile_grid(pair: SamplePair) -> list[SamplePair]:
    """Plain 4x4 partition in grid order (padding applied, no augmentation)."""
    img, _ = pad_to_multiple(pair.image, 4)
    msk, _ = pad_to_multiple(pair.mask, 4)
    _, h, w = img.shape
    th, tw = h // 4, w // 4
    tiles = []
    for r in range(4):
        for c in range(4):
            sl = (slice(None), slice(r * th, (r + 1) * th), slice(c * tw, (c + 1) * tw))
            tiles.append(SamplePair(image=img[sl].copy(), mask=msk[sl].copy()))
    return tiles


def tile_and_augment(
    pair: SamplePair,
    seed: int,
    noise_sigma: float = 0.05,
    rotate: bool = True,
    permute: bool = True,
) -> list[SamplePair]:
    """Split into a 4x4 grid of tiles, rotate each by a random multiple of 90
    degrees, add gaussian noise to images only, and shuffle tile order.

    Deterministic given the seed; rotate/permute can be disabled to expose
    the pure partition.
    """
    _, h, w = pair.image.shape
    if h < 4 or w < 4:
        raise ValueError(f"input must be at least 4x4, got {h}x{w}")
    tiles = tile_grid(pair)
    rng = np.random.default_rng(seed)
    if rotate:
        turns = rng.integers(0, 4, size=16)
        tiles = [
            SamplePair(
                image=np.rot90(t.image, int(k), axes=(1, 2)).copy(),
                mask=np.rot90(t.mask, int(k), axes=(1, 2)).copy(),
            )
            for t, k in zip(tiles, turns)
        ]
    if noise_sigma > 0:
        tiles = [
            SamplePair(
                image=np.clip(t.image + rng.normal(0.0, noise_sigma, size=t.image.shape), 0.0, 1.0),
                mask=t.mask,
            )
            for t in tiles
        ]
    if permute:
        tiles = [tiles[i] for i in rng.permutation(16)]
    return tiles
