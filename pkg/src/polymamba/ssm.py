"""Selective state-space scanning (S6) and its 2D composition with polygon orders.

The recurrence is the standard diagonal zero-order-hold form: per channel,
h_t = exp(delta_t * A) * h_{t-1} + B_bar_t * x_t and y_t = <C_t, h_t> + D * x_t,
with B_bar = ((exp(delta * A) - 1) / A) * B and the limit delta * B taken
where |A| is tiny. B, C and delta may be fixed arrays or produced from the
sequence itself by linear projections (the selective mode used in the model).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import softplus
from .scan import PolygonSpec, cross_merge, cross_scan, scan_orders

_A_LIMIT = 1e-8


@dataclass
class SsmParams:
    """Discrete-time scan parameters for a sequence of length L with C channels.

    A: (C, S) continuous-time diagonal state matrix (negative at init).
    B: (L, S) input projection per timestep.
    C: (L, S) readout per timestep.
    D: (C,) skip coefficient.
    delta: (L, C) positive step sizes.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    delta: np.ndarray

    @property
    def state_dim(self) -> int:
        return self.A.shape[1]


@dataclass
class SelectiveProjection:
    """Per-direction weights that turn a sequence into SsmParams.

    B and C come from w_b / w_c (C, S); delta = softplus(x @ w_dt + b_dt)
    with w_dt (C, C). A (C, S) and D (C,) are direct learnables.
    """

    w_b: np.ndarray
    w_c: np.ndarray
    w_dt: np.ndarray
    b_dt: np.ndarray
    A: np.ndarray
    D: np.ndarray


def discretize(A: np.ndarray, B: np.ndarray, delta: float):
    """Zero-order-hold discretization of one step: (A_bar, B_bar).

    A_bar = exp(delta * A); B_bar = ((exp(delta * A) - 1) / A) * B, with the
    limit delta * B where |A| < 1e-8.
    """
    if not (np.isscalar(delta) or np.ndim(delta) == 0) or not delta > 0:
        raise ValueError(f"delta must be a positive scalar, got {delta!r}")
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    a_bar = np.exp(delta * A)
    small = np.abs(A) < _A_LIMIT
    safe = np.where(small, 1.0, A)
    b_bar = np.where(small, delta, (a_bar - 1.0) / safe) * B
    return a_bar, b_bar


def _scan_stacked(x: np.ndarray, A, B, C, D, delta) -> np.ndarray:
    """Core recurrence over stacked directions.

    x: (G, L, C); A: (G, C, S); B, C: (G, L, S); D: (G, C); delta: (G, L, C).
    Returns y (G, L, C). Only the time loop is sequential.
    """
    g, length, ch = x.shape
    a_bar = np.exp(delta[..., None] * A[:, None, :, :])  # (G, L, C, S)
    small = np.abs(A) < _A_LIMIT
    safe = np.where(small, 1.0, A)
    coef = np.where(small[:, None, :, :], delta[..., None], (a_bar - 1.0) / safe[:, None, :, :])
    bu = coef * B[:, :, None, :] * x[..., None]  # (G, L, C, S)
    y = np.empty((g, length, ch))
    h = np.zeros((g, ch, A.shape[2]))
    for t in range(length):
        h = a_bar[:, t] * h + bu[:, t]
        y[:, t] = np.einsum("gcs,gs->gc", h, C[:, t]) + D * x[:, t]
    return y


def selective_scan(x: np.ndarray, params: SsmParams) -> np.ndarray:
    """Run the recurrence over x (L, C) -> y (L, C), O(L * S) per channel."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"x must be (L, C), got shape {x.shape}")
    length, ch = x.shape
    if length < 1:
        raise ValueError("sequence must have at least one step")
    for name, arr, want in (
        ("B", params.B, (length, params.state_dim)),
        ("C", params.C, (length, params.state_dim)),
        ("delta", params.delta, (length, ch)),
        ("A", params.A, (ch, params.state_dim)),
        ("D", params.D, (ch,)),
    ):
        if tuple(arr.shape) != want:
            raise ValueError(f"{name} has shape {arr.shape}, expected {want}")
    y = _scan_stacked(
        x[None], params.A[None], params.B[None], params.C[None], params.D[None], params.delta[None]
    )
    return y[0]


def selective_params(seq: np.ndarray, proj: SelectiveProjection) -> SsmParams:
    """Input-dependent parameters for one direction's sequence (L, C)."""
    b = np.einsum("lc,cs->ls", seq, proj.w_b)
    c = np.einsum("lc,cs->ls", seq, proj.w_c)
    delta = softplus(np.einsum("lc,cd->ld", seq, proj.w_dt) + proj.b_dt)
    return SsmParams(A=proj.A, B=b, C=c, D=proj.D, delta=delta)


def ps_ss2d(feature: np.ndarray, spec: PolygonSpec, params) -> np.ndarray:
    """Polygon-scanning 2D selective scan: cross-scan, per-direction S6, cross-merge.

    params is a sequence of 4 SsmParams, one per rotational variant; output
    shape equals input shape.
    """
    if len(params) != 4:
        raise ValueError(f"expected 4 parameter sets, got {len(params)}")
    c, h, w = feature.shape
    orders = scan_orders(h, w, spec)
    seqs = cross_scan(feature, orders)  # (4, C, L)
    x = seqs.transpose(0, 2, 1)  # (4, L, C)
    y = _scan_stacked(
        x,
        np.stack([p.A for p in params]),
        np.stack([p.B for p in params]),
        np.stack([p.C for p in params]),
        np.stack([p.D for p in params]),
        np.stack([p.delta for p in params]),
    )
    return cross_merge(y.transpose(0, 2, 1), orders)


def ps_ss2d_selective(feature: np.ndarray, spec: PolygonSpec, projections) -> np.ndarray:
    """ps_ss2d with per-direction parameters projected from each direction's own sequence."""
    if len(projections) != 4:
        raise ValueError(f"expected 4 projections, got {len(projections)}")
    c, h, w = feature.shape
    orders = scan_orders(h, w, spec)
    seqs = cross_scan(feature, orders).transpose(0, 2, 1)  # (4, L, C)
    params = [selective_params(seqs[d], projections[d]) for d in range(4)]
    y = _scan_stacked(
        seqs,
        np.stack([p.A for p in params]),
        np.stack([p.B for p in params]),
        np.stack([p.C for p in params]),
        np.stack([p.D for p in params]),
        np.stack([p.delta for p in params]),
    )
    return cross_merge(y.transpose(0, 2, 1), orders)
