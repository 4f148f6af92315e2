"""Domain types and elementary geometry.

Coordinates follow the image convention: pixel ``(x, y)`` is column ``x``,
row ``y``, origin at the top-left corner. Boxes are stored top-left + size.
Pixel sets are ``(N, 2)`` float arrays of ``(x, y)`` rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional, Tuple

import numpy as np

from .errors import BadValue, EmptyMask

UNIT_NORM_TOL = 1e-3


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ValueError(f"box coordinates must be finite, got {self.as_tuple()}")
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box size must be positive, got w={self.w} h={self.h}")

    def center(self) -> Tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def area(self) -> float:
        return self.w * self.h

    def translate(self, dx, dy) -> "BBox":
        return BBox(self.x + dx, self.y + dy, self.w, self.h)

    def as_tuple(self):
        return (self.x, self.y, self.w, self.h)


def iou(a: BBox, b: BBox) -> float:
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area() + b.area() - inter
    return min(1.0, inter / union)


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise IoU, ``len(boxes_a) x len(boxes_b)``."""
    out = np.zeros((len(boxes_a), len(boxes_b)))
    for i, a in enumerate(boxes_a):
        for j, b in enumerate(boxes_b):
            out[i, j] = iou(a, b)
    return out


@dataclass(frozen=True)
class Mask:
    """Binary mask stored as COCO-style uncompressed RLE.

    ``runs`` alternate background/foreground counts over the column-major
    flattening of the ``height x width`` grid, starting with background.
    """

    height: int
    width: int
    runs: Tuple[int, ...]

    def __post_init__(self):
        runs = tuple(int(r) for r in self.runs)
        object.__setattr__(self, "runs", runs)
        if self.height <= 0 or self.width <= 0:
            raise ValueError("mask dimensions must be positive")
        if any(r < 0 for r in runs):
            raise ValueError("negative run length")
        if sum(runs) != self.height * self.width:
            raise ValueError(
                f"runs sum to {sum(runs)}, expected {self.height * self.width}")
        if any(r == 0 for r in runs[1:]):
            raise ValueError("zero-length run after the first position")

    @classmethod
    def from_array(cls, arr) -> "Mask":
        arr = np.asarray(arr, dtype=bool)
        h, w = arr.shape
        flat = arr.ravel(order="F")
        change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
        bounds = np.concatenate(([0], change, [flat.size]))
        runs = np.diff(bounds).tolist()
        if flat.size and flat[0]:
            runs = [0] + runs
        return cls(h, w, tuple(runs))

    def to_array(self) -> np.ndarray:
        flat = np.zeros(self.height * self.width, dtype=bool)
        pos = 0
        for k, r in enumerate(self.runs):
            if k % 2 == 1:
                flat[pos:pos + r] = True
            pos += r
        return flat.reshape((self.height, self.width), order="F")

    def pixel_count(self) -> int:
        return sum(self.runs[1::2])


def mask_pixels(m: Mask) -> np.ndarray:
    """Foreground pixels as ``(N, 2)`` ``(x, y)`` rows in column-major order."""
    pts = []
    pos = 0
    h = m.height
    for k, r in enumerate(m.runs):
        if k % 2 == 1 and r:
            idx = np.arange(pos, pos + r)
            pts.append(np.stack([idx // h, idx % h], axis=1))
        pos += r
    if not pts:
        return np.zeros((0, 2))
    return np.concatenate(pts).astype(float)


def mask_centroid(m: Mask) -> Tuple[float, float]:
    pts = mask_pixels(m)
    if len(pts) == 0:
        raise EmptyMask("centroid of an empty mask")
    cx, cy = pts.mean(axis=0)
    return (float(cx), float(cy))


@dataclass(frozen=True)
class FlowField:
    """Dense displacement field; ``u``/``v`` are ``height x width`` arrays."""

    height: int
    width: int
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float32)
        v = np.asarray(self.v, dtype=np.float32)
        if u.shape != (self.height, self.width) or v.shape != (self.height, self.width):
            raise ValueError("flow grid does not match declared size")
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise ValueError("flow contains non-finite values")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, height, width) -> "FlowField":
        return cls(height, width, np.zeros((height, width)), np.zeros((height, width)))


def normalize(vec) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    n = np.linalg.norm(vec)
    if n < 1e-12:
        raise ValueError("cannot normalize a zero vector")
    return vec / n


@dataclass
class Detection:
    frame: int
    det_id: int
    box: BBox
    confidence: float
    mask: Optional[Mask] = None
    embedding: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.frame < 1:
            raise ValueError("frames are 1-based")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


_BOOL_KEYS = ("pmm_enabled", "cdm_enabled", "dbc_enabled", "careid_enabled",
              "appearance_enabled", "stage2_appearance", "strict_flow",
              "pdf_enabled")


@dataclass
class AssocConfig:
    # fusion weights
    lambda_ilm: float = 1.0
    lambda_p: float = 0.2
    lambda_c: float = 1.0
    lambda_ocm: float = 0.2
    lambda_appr: float = 1.0
    # distribution-based correction
    tau_d: float = 0.1
    # appearance
    cluster_iou_thresh: float = 0.3
    ema_alpha: float = 0.95
    # detection split
    high_conf_thresh: float = 0.6
    low_conf_thresh: float = 0.1
    # lifecycle
    max_age: int = 30
    min_hits: int = 3
    # motion
    ocm_delta_t: int = 3
    # gating
    match_gate: float = 0.1
    pmm_gate: float = 0.5
    recovery_iou_thresh: float = 0.3
    cdm_epsilon: float = 1e-6
    # box-pixel filter used instead of masks
    pdf_enabled: bool = False
    pdf_tau_m: float = 0.7
    pdf_alpha: float = 0.45
    # cue switches
    pmm_enabled: bool = True
    cdm_enabled: bool = True
    dbc_enabled: bool = True
    careid_enabled: bool = True
    appearance_enabled: bool = True
    stage2_appearance: bool = False
    strict_flow: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        def bad(msg):
            raise BadValue(msg)

        if not 0 < self.low_conf_thresh <= self.high_conf_thresh <= 1:
            bad("need 0 < low_conf_thresh <= high_conf_thresh <= 1")
        if not self.tau_d > 0:
            bad("tau_d must be positive")
        if not 0 < self.cluster_iou_thresh < 1:
            bad("cluster_iou_thresh must lie in (0, 1)")
        if not 0 < self.ema_alpha < 1:
            bad("ema_alpha must lie in (0, 1)")
        for key in ("max_age", "min_hits", "ocm_delta_t"):
            val = getattr(self, key)
            if isinstance(val, bool) or not isinstance(val, int) or val < 1:
                bad(f"{key} must be a positive integer")
        for key in ("lambda_ilm", "lambda_p", "lambda_c", "lambda_ocm", "lambda_appr"):
            val = getattr(self, key)
            if not (math.isfinite(val) and val >= 0):
                bad(f"{key} must be finite and non-negative")
        for key in ("match_gate", "pmm_gate", "recovery_iou_thresh"):
            if not 0 <= getattr(self, key) <= 1:
                bad(f"{key} must lie in [0, 1]")
        if not self.cdm_epsilon > 0:
            bad("cdm_epsilon must be positive")
        if not 0 <= self.pdf_tau_m <= 1:
            bad("pdf_tau_m must lie in [0, 1]")
        if not 0 < self.pdf_alpha <= 0.5:
            bad("pdf_alpha must lie in (0, 0.5]")

    @classmethod
    def baseline(cls, **overrides) -> "AssocConfig":
        """Instance-level motion only: every pixel and appearance cue off."""
        kw = dict(pmm_enabled=False, cdm_enabled=False, dbc_enabled=False,
                  careid_enabled=False, appearance_enabled=False)
        kw.update(overrides)
        return cls(**kw)

    @classmethod
    def field_types(cls):
        return {f.name: f.type for f in fields(cls)}

    @staticmethod
    def is_bool_key(key):
        return key in _BOOL_KEYS
