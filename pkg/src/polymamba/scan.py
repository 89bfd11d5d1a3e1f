"""Polygon scan-order generation and the cross-scan / cross-merge permutations.

A grid is partitioned into nested polygonal rings around a center point.
Ring membership comes from the Minkowski gauge of the regular N-gon: the
gauge of a point is the circumradius the polygon must be scaled to so that
it just contains the point. Cells are bucketed by ceil(gauge / scale_step),
each ring is swept by angle, and consecutive rings alternate sweep
direction. Four rotated variants of the order feed the four scan
directions.

Coordinate conventions:
  * polygon_vertices / polygon_gauge live in the plain (x, y) plane.
  * Grid operations map cell (row, col) to that plane with x = col - c_col
    and y = c_row - row (image-up y axis), and measure angles there with
    atan2(y, x) normalized to [0, 2*pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

VARIANTS = ("rot0", "rot90", "rot180", "rot270")

FORWARD = "forward"
REVERSE = "reverse"

# snap tolerance for gauges that land on a ring boundary up to float noise
_BOUNDARY_SNAP = 1e-9


@dataclass(frozen=True)
class PolygonSpec:
    """Regular N-gon used for ring partitioning.

    center is in grid coordinates (row, col); None means the grid midpoint
    ((h-1)/2, (w-1)/2). scale_step is the gauge width of one ring.
    """

    n_sides: int = 5
    theta: float = 0.0
    center: tuple[float, float] | None = None
    scale_step: float = 1.0

    def __post_init__(self):
        if self.n_sides < 3:
            raise ValueError(f"n_sides must be >= 3, got {self.n_sides}")
        if not math.isfinite(self.theta):
            raise ValueError("theta must be finite")
        if not (math.isfinite(self.scale_step) and self.scale_step > 0):
            raise ValueError(f"scale_step must be positive and finite, got {self.scale_step}")
        if self.center is not None:
            if len(self.center) != 2 or not all(math.isfinite(c) for c in self.center):
                raise ValueError(f"center must be a finite (row, col) pair, got {self.center}")


@dataclass
class ScanRing:
    ring_index: int
    cells: np.ndarray  # flat cell indices
    direction: str  # FORWARD iff ring_index is even


@dataclass
class ScanOrder:
    height: int
    width: int
    order: np.ndarray  # permutation of range(height * width)
    rings: list[ScanRing]
    variant: str
    spec: PolygonSpec = field(default_factory=PolygonSpec)


def polygon_vertices(spec: PolygonSpec, radius: float) -> list[tuple[float, float]]:
    """Vertices of the N-gon with the given circumradius.

    Vertex i sits at angle theta + 2*pi*i/N and distance radius from the
    center, for i = 0..N-1.
    """
    if not (math.isfinite(radius) and radius > 0):
        raise ValueError(f"radius must be positive and finite, got {radius}")
    cx, cy = spec.center if spec.center is not None else (0.0, 0.0)
    if not (math.isfinite(cx) and math.isfinite(cy)):
        raise ValueError("center must be finite")
    out = []
    for i in range(spec.n_sides):
        ang = spec.theta + 2.0 * math.pi * i / spec.n_sides
        out.append((cx + radius * math.cos(ang), cy + radius * math.sin(ang)))
    return out


def _edge_normals(n_sides: int, theta: float) -> np.ndarray:
    """Unit outward normals of the N-gon's edges, shape (N, 2)."""
    i = np.arange(n_sides)
    ang = theta + 2.0 * np.pi * (i + 0.5) / n_sides
    return np.stack([np.cos(ang), np.sin(ang)], axis=1)


def _gauge_offsets(offsets: np.ndarray, n_sides: int, theta: float) -> np.ndarray:
    """Gauge of each (x, y) offset row w.r.t. the origin-centered unit N-gon."""
    normals = _edge_normals(n_sides, theta)
    apothem = math.cos(math.pi / n_sides)
    dots = np.einsum("pk,nk->pn", offsets, normals)
    return np.maximum(dots.max(axis=1), 0.0) / apothem


def polygon_gauge(point: tuple[float, float], spec: PolygonSpec) -> float:
    """Smallest s >= 0 such that the N-gon of circumradius s contains point.

    Positively homogeneous in the offset from the center; 0 at the center.
    """
    cx, cy = spec.center if spec.center is not None else (0.0, 0.0)
    off = np.array([[point[0] - cx, point[1] - cy]], dtype=np.float64)
    return float(_gauge_offsets(off, spec.n_sides, spec.theta)[0])


def _grid_frame(height: int, width: int, spec: PolygonSpec):
    """Per-cell plane offsets and gauges for a full grid.

    Returns (x, y, gauge) flat arrays of length height*width, in the
    image-up frame around the spec center (grid midpoint by default).
    """
    c_row, c_col = spec.center if spec.center is not None else ((height - 1) / 2.0, (width - 1) / 2.0)
    rows, cols = np.divmod(np.arange(height * width), width)
    x = cols.astype(np.float64) - c_col
    y = c_row - rows.astype(np.float64)
    gauge = _gauge_offsets(np.stack([x, y], axis=1), spec.n_sides, spec.theta)
    return x, y, gauge


def _ring_indices(gauge: np.ndarray, scale_step: float) -> np.ndarray:
    """Bucket gauges into rings: ceil(g / step), boundary cells going inward."""
    scaled = gauge / scale_step
    nearest = np.round(scaled)
    on_boundary = np.abs(scaled - nearest) < _BOUNDARY_SNAP
    raw = np.where(on_boundary, nearest, np.ceil(scaled)).astype(np.int64)
    if not np.any(raw == 0):
        # no cell sits at the center: promote the gauge minimizer (first in
        # row-major order on ties) to its own center ring
        raw[int(np.argmin(gauge))] = 0
    return raw


def ring_partition(height: int, width: int, spec: PolygonSpec) -> list[ScanRing]:
    """Partition the grid into nested polygon rings (cells not yet angle-sorted).

    Ring indices are compacted so the returned list has no empty rings;
    cells within a ring are in row-major order.
    """
    if height < 1 or width < 1:
        raise ValueError(f"grid must be at least 1x1, got {height}x{width}")
    _, _, gauge = _grid_frame(height, width, spec)
    raw = _ring_indices(gauge, spec.scale_step)
    rings = []
    for rank, level in enumerate(np.unique(raw)):
        cells = np.flatnonzero(raw == level)
        rings.append(ScanRing(rank, cells, FORWARD if rank % 2 == 0 else REVERSE))
    return rings


def _base_order(height: int, width: int, spec: PolygonSpec) -> list[ScanRing]:
    """Rings with cells angle-sorted and direction applied (rot0 reading)."""
    x, y, gauge = _grid_frame(height, width, spec)
    angle = np.mod(np.arctan2(y, x), 2.0 * np.pi)
    rings = ring_partition(height, width, spec)
    flat = np.arange(height * width)
    for ring in rings:
        cells = ring.cells
        sign = 1.0 if ring.direction == FORWARD else -1.0
        # ties on angle break by ascending gauge, then row-major index
        key = np.lexsort((flat[cells], gauge[cells], sign * angle[cells]))
        ring.cells = cells[key]
    return rings


@lru_cache(maxsize=256)
def scan_order(height: int, width: int, spec: PolygonSpec, variant: str = "rot0") -> ScanOrder:
    """Full polygon scan order for one rotational variant.

    The variant rotates the index grid counterclockwise (rot90 once, and so
    on) and reads the base order off the rotated grid, so the four variants
    traverse the same rings along four different paths.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if height < 1 or width < 1:
        raise ValueError(f"grid must be at least 1x1, got {height}x{width}")
    grid = np.arange(height * width, dtype=np.int64).reshape(height, width)
    turns = VARIANTS.index(variant)
    rot = np.rot90(grid, turns)
    rh, rw = rot.shape
    rot_flat = np.ascontiguousarray(rot).reshape(-1)
    rings = _base_order(rh, rw, spec)
    for ring in rings:
        ring.cells = rot_flat[ring.cells]
    order = np.concatenate([r.cells for r in rings]) if rings else np.empty(0, np.int64)
    return ScanOrder(height, width, order, rings, variant, spec)


def scan_orders(height: int, width: int, spec: PolygonSpec) -> tuple[ScanOrder, ...]:
    """The four rotational variants, in VARIANTS order."""
    return tuple(scan_order(height, width, spec, v) for v in VARIANTS)


def cross_scan(feature: np.ndarray, orders) -> np.ndarray:
    """Gather a (c, h, w) feature map into 4 sequences, shape (4, c, h*w)."""
    if feature.ndim != 3:
        raise ValueError(f"feature must be (c, h, w), got shape {feature.shape}")
    c, h, w = feature.shape
    if len(orders) != 4:
        raise ValueError(f"expected 4 scan orders, got {len(orders)}")
    for o in orders:
        if (o.height, o.width) != (h, w):
            raise ValueError(f"scan order is {o.height}x{o.width}, feature is {h}x{w}")
    flat = feature.reshape(c, h * w)
    return np.stack([flat[:, o.order] for o in orders])


def cross_merge(seqs: np.ndarray, orders) -> np.ndarray:
    """Scatter 4 sequences back through their orders and sum the maps.

    Exact inverse-permutation scatter per direction, then an elementwise
    sum in fixed direction order, so cross_merge(cross_scan(x)) == 4 * x
    bit-exactly.
    """
    seqs = np.asarray(seqs)
    if len(orders) != 4 or seqs.shape[0] != 4:
        raise ValueError("expected 4 sequences and 4 scan orders")
    h, w = orders[0].height, orders[0].width
    c = seqs.shape[1]
    if seqs.shape[2] != h * w:
        raise ValueError(f"sequence length {seqs.shape[2]} != {h}x{w} grid")
    out = np.zeros((c, h * w))
    for d, o in enumerate(orders):
        if (o.height, o.width) != (h, w):
            raise ValueError("scan orders disagree on grid shape")
        out[:, o.order] += seqs[d]
    return out.reshape(c, h, w)


def dump_scan_order(so: ScanOrder) -> str:
    """Two-line text form: "H W N theta variant" then the permutation."""
    head = f"{so.height} {so.width} {so.spec.n_sides} {so.spec.theta!r} {so.variant}"
    body = " ".join(str(int(i)) for i in so.order)
    return head + "\n" + body + "\n"


def load_scan_order(text: str) -> ScanOrder:
    """Parse dump_scan_order output, recomputing rings and verifying the permutation."""
    lines = text.strip().splitlines()
    if len(lines) != 2:
        raise ValueError("scan order text must have exactly two lines")
    fields = lines[0].split()
    if len(fields) != 5:
        raise ValueError(f"bad scan order header: {lines[0]!r}")
    h, w, n = int(fields[0]), int(fields[1]), int(fields[2])
    theta, variant = float(fields[3]), fields[4]
    so = scan_order(h, w, PolygonSpec(n_sides=n, theta=theta), variant)
    perm = np.array([int(t) for t in lines[1].split()], dtype=np.int64)
    if perm.shape != so.order.shape or not np.array_equal(perm, so.order):
        raise ValueError("stored permutation does not match its header")
    return so


def _hsv_to_rgb(h: np.ndarray) -> np.ndarray:
    """Full-saturation hue wheel, h in [0, 1) -> rgb in [0, 1], vectorized."""
    h6 = (h % 1.0) * 6.0
    sector = np.floor(h6).astype(np.int64) % 6
    f = h6 - np.floor(h6)
    p = np.zeros_like(h)
    q = 1.0 - f
    t = f
    one = np.ones_like(h)
    table = np.array(
        [
            [one, t, p],
            [q, one, p],
            [p, one, t],
            [p, q, one],
            [t, p, one],
            [one, p, q],
        ]
    )  # (6, 3, n)
    idx = np.arange(h.size)
    return np.stack([table[sector, k, idx] for k in range(3)])


def heatmap_rgb(so: ScanOrder) -> np.ndarray:
    """Visit-rank heat map, hue encoding rank; shape (3, h, w), values in [0, 1]."""
    n = so.height * so.width
    rank = np.empty(n, dtype=np.float64)
    rank[so.order] = np.arange(n, dtype=np.float64)
    rgb = _hsv_to_rgb(rank / n)
    return rgb.reshape(3, so.height, so.width)
