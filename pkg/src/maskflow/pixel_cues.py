"""Pixel-level cues: flow warping, pixel-motion matching, centroid-distance
matching, flow-magnitude statistics and the distribution-based IoU
correction, plus the heuristic pixel filter used when no masks exist."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .core import BBox, FlowField, Mask, mask_centroid
from .errors import DegeneratePixelSet, EmptyPixelSet

DEGENERATE_SPAN = 1e-6


@dataclass(frozen=True)
class FlowStats:
    n: int = 0
    mu: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.n < 0 or self.sigma < 0:
            raise ValueError("invalid flow statistics")
        if self.n == 0 and (self.mu != 0 or self.sigma != 0):
            raise ValueError("empty statistics must be all zero")


def _sample(flow: FlowField, pixels: np.ndarray):
    xs = pixels[:, 0].astype(np.int64)
    ys = pixels[:, 1].astype(np.int64)
    return flow.u[ys, xs].astype(float), flow.v[ys, xs].astype(float)


def warp_pixels(pixels: np.ndarray, flow: FlowField) -> np.ndarray:
    """Move each integer pixel by the flow sampled at it.

    Points landing outside ``[0, W-1] x [0, H-1]`` are dropped; order is kept.
    """
    pixels = np.asarray(pixels, dtype=float).reshape(-1, 2)
    if len(pixels) == 0:
        return pixels.copy()
    u, v = _sample(flow, pixels)
    out = pixels + np.stack([u, v], axis=1)
    keep = ((out[:, 0] >= 0) & (out[:, 0] <= flow.width - 1)
            & (out[:, 1] >= 0) & (out[:, 1] <= flow.height - 1))
    return out[keep]


def _round_half_up(a):
    return np.floor(a + 0.5).astype(np.int64)


def pmm_cost(warped: np.ndarray, det_mask) -> float:
    """Negative fraction of warped points that land on the detection mask.

    ``det_mask`` is a :class:`Mask` or its decoded boolean ``H x W`` grid.
    Points are snapped to the nearest pixel (halves round up).
    """
    warped = np.asarray(warped, dtype=float).reshape(-1, 2)
    if len(warped) == 0:
        raise EmptyPixelSet("no warped pixels")
    grid = det_mask.to_array() if isinstance(det_mask, Mask) else np.asarray(det_mask, bool)
    h, w = grid.shape
    xs = _round_half_up(warped[:, 0])
    ys = _round_half_up(warped[:, 1])
    inside = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    hits = np.zeros(len(warped), dtype=bool)
    hits[inside] = grid[ys[inside], xs[inside]]
    return -float(hits.sum()) / len(warped)


def centroid_distance(a: Mask, b: Mask) -> float:
    ax, ay = mask_centroid(a)
    bx, by = mask_centroid(b)
    return math.hypot(ax - bx, ay - by)


def cdm_cost_row(distances: Sequence[float], epsilon: float = 1e-6) -> List[float]:
    d = np.asarray(distances, dtype=float)
    if d.size == 0:
        raise ValueError("empty distance row")
    dmin = max(float(d.min()), epsilon)
    with np.errstate(under="ignore"):
        cost = -np.exp(1.0 - d / dmin)
    return np.clip(cost, -1.0, 0.0).tolist()


def flow_magnitude_stats(pixels: np.ndarray, flow: FlowField):
    """Population ``(mean, std, n)`` of per-pixel flow magnitude."""
    pixels = np.asarray(pixels, dtype=float).reshape(-1, 2)
    if len(pixels) == 0:
        return 0.0, 0.0, 0
    u, v = _sample(flow, pixels)
    mag = np.sqrt(u * u + v * v)
    return float(mag.mean()), float(mag.std()), len(mag)


def flow_box(warped: np.ndarray) -> BBox:
    warped = np.asarray(warped, dtype=float).reshape(-1, 2)
    if len(warped) == 0:
        raise DegeneratePixelSet("no pixels")
    lo = warped.min(axis=0)
    hi = warped.max(axis=0)
    span = hi - lo
    if span[0] <= DEGENERATE_SPAN or span[1] <= DEGENERATE_SPAN:
        raise DegeneratePixelSet("pixel set collapses along an axis")
    return BBox(float(lo[0]), float(lo[1]), max(float(span[0]), DEGENERATE_SPAN),
                max(float(span[1]), DEGENERATE_SPAN))


def dbc_should_record(kf_iou: float, flow_iou: float, tau_d: float) -> bool:
    return flow_iou - kf_iou > tau_d


def dbc_merge_stats(prev: FlowStats, cur: FlowStats) -> FlowStats:
    """Pool two sets of population moments.

    The variance divisor sits inside the square root so the result matches
    the moments of the concatenated samples.
    """
    n = prev.n + cur.n
    if n == 0:
        return FlowStats()
    if prev.n == 0:
        return cur
    if cur.n == 0:
        return prev
    mu = (prev.n * prev.mu + cur.n * cur.mu) / n
    delta = prev.mu - cur.mu
    m2 = (prev.n * prev.sigma ** 2 + cur.n * cur.sigma ** 2
          + prev.n * cur.n * delta * delta / n)
    return FlowStats(n, mu, math.sqrt(max(m2, 0.0) / n))


def dbc_trigger(stats: FlowStats, current_mean: float) -> bool:
    if stats.n == 0:
        return False
    return abs(current_mean - stats.mu) <= stats.sigma


def dbc_correct_row(kf_ious, flow_ious, triggered: bool) -> List[float]:
    kf = np.asarray(kf_ious, dtype=float)
    fl = np.asarray(flow_ious, dtype=float)
    if kf.shape != fl.shape:
        raise ValueError("IoU rows differ in length")
    if not triggered:
        return kf.tolist()
    return np.maximum(kf, fl).tolist()


def pdf_filter(pixels: np.ndarray, flow: FlowField, box: BBox,
               tau_m: float = 0.7, alpha: float = 0.45) -> np.ndarray:
    """Keep pixels that move (relative to the set) and sit on the box's centre cross."""
    pixels = np.asarray(pixels, dtype=float).reshape(-1, 2)
    if len(pixels) == 0:
        return pixels.copy()
    u, v = _sample(flow, pixels)
    mag = np.sqrt(u * u + v * v)
    lo, hi = mag.min(), mag.max()
    if hi - lo > 0:
        norm = (mag - lo) / (hi - lo)
    else:
        norm = np.ones_like(mag)
    moving = norm >= tau_m
    xc, yc = box.center()
    cross = ((np.abs(pixels[:, 0] - xc) <= alpha * box.w)
             | (np.abs(pixels[:, 1] - yc) <= alpha * box.h))
    return pixels[moving & cross]
