"""Cost fusion and the three-stage matching cascade.

All costs follow "lower is better": overlap enters as ``-IoU`` and the pixel
cues are already negative affinities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import AssocConfig


def hungarian(cost) -> List[Tuple[int, int]]:
    """Minimum-cost assignment of ``min(rows, cols)`` pairs.

    Rectangular inputs are padded to square with a large finite sentinel.
    Shortest augmenting paths with row/column potentials, O(n^3); ties are
    resolved by lowest column index, so output is deterministic.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost must be 2-D")
    rows, cols = cost.shape
    if rows == 0 or cols == 0:
        return []
    if not np.isfinite(cost).all():
        raise ValueError("cost entries must be finite")
    n = max(rows, cols)
    sentinel = 10.0 * float(np.abs(cost).max()) + 1.0
    a = np.full((n, n), sentinel)
    a[:rows, :cols] = cost

    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row assigned to column j (1-based)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = a[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            used_idx = np.flatnonzero(used)
            u[p[used_idx]] += delta
            v[used_idx] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    pairs = []
    for j in range(1, n + 1):
        r, c = int(p[j]) - 1, j - 1
        if r < rows and c < cols:
            pairs.append((r, c))
    pairs.sort()
    return pairs


@dataclass
class CostMatrix:
    """Per-cue cost layers for one track set against one detection set.

    ``kf_iou`` is overlap with the motion-model prediction, ``flow_iou`` with
    the flow-derived box (only meaningful on rows where ``dbc_triggered``).
    """

    kf_iou: np.ndarray
    ocm: Optional[np.ndarray] = None
    flow_iou: Optional[np.ndarray] = None
    dbc_triggered: Optional[np.ndarray] = None
    pmm: Optional[np.ndarray] = None
    cdm: Optional[np.ndarray] = None
    appearance: Optional[np.ndarray] = None
    fused: Optional[np.ndarray] = None

    def __post_init__(self):
        self.kf_iou = np.asarray(self.kf_iou, dtype=float)
        if self.kf_iou.ndim != 2:
            raise ValueError("cost layers must be 2-D")
        shape = self.kf_iou.shape
        zero = lambda: np.zeros(shape)
        self.ocm = zero() if self.ocm is None else np.asarray(self.ocm, float)
        self.flow_iou = zero() if self.flow_iou is None else np.asarray(self.flow_iou, float)
        self.pmm = zero() if self.pmm is None else np.asarray(self.pmm, float)
        self.cdm = zero() if self.cdm is None else np.asarray(self.cdm, float)
        self.appearance = zero() if self.appearance is None else np.asarray(self.appearance, float)
        if self.dbc_triggered is None:
            self.dbc_triggered = np.zeros(shape[0], dtype=bool)
        self.dbc_triggered = np.asarray(self.dbc_triggered, dtype=bool)
        for name in ("ocm", "flow_iou", "pmm", "cdm", "appearance"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"layer {name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.dbc_triggered.shape != (shape[0],):
            raise ValueError("dbc_triggered must have one entry per row")

    @property
    def shape(self):
        return self.kf_iou.shape

    def corrected_iou(self, dbc_enabled=True) -> np.ndarray:
        out = self.kf_iou.copy()
        if dbc_enabled and self.dbc_triggered.any():
            rows = self.dbc_triggered
            out[rows] = np.maximum(self.kf_iou[rows], self.flow_iou[rows])
        return out


@dataclass
class MatchResult:
    matches: List[Tuple[int, int]] = field(default_factory=list)
    unmatched_tracks: List[int] = field(default_factory=list)
    unmatched_dets: List[int] = field(default_factory=list)


def fuse_costs(layers: CostMatrix, config: AssocConfig, stage: int = 1) -> np.ndarray:
    """Weighted cue sum for one association stage.

    The pixel-motion term is active only in stage 1 and the centroid term only
    in stage 2; appearance joins stage 1 (stage 2 when ``stage2_appearance``).
    """
    iou_layer = layers.corrected_iou(config.dbc_enabled)
    ilm = -iou_layer + config.lambda_ocm * layers.ocm
    fused = config.lambda_ilm * ilm
    if stage == 1 and config.pmm_enabled:
        fused = fused + config.lambda_p * layers.pmm
    if stage == 2 and config.cdm_enabled:
        fused = fused + config.lambda_c * layers.cdm
    use_app = config.appearance_enabled and (stage == 1 or (stage == 2 and config.stage2_appearance))
    if use_app:
        fused = fused + config.lambda_appr * layers.appearance
    layers.fused = fused
    return fused


def _solve(fused, accept, n_rows, n_cols) -> MatchResult:
    res = MatchResult()
    if n_rows and n_cols:
        for r, c in hungarian(fused):
            if accept[r, c]:
                res.matches.append((r, c))
    used_r = {r for r, _ in res.matches}
    used_c = {c for _, c in res.matches}
    res.unmatched_tracks = [r for r in range(n_rows) if r not in used_r]
    res.unmatched_dets = [c for c in range(n_cols) if c not in used_c]
    return res


def associate_stage1(layers: CostMatrix, config: AssocConfig) -> MatchResult:
    """High-confidence matching on the full fused cost.

    A pair survives when its corrected IoU reaches ``match_gate`` or, with
    pixel motion enabled, when at least ``pmm_gate`` of the warped track
    pixels land on the detection mask.
    """
    rows, cols = layers.shape
    if rows == 0 or cols == 0:
        return _solve(None, None, rows, cols)
    fused = fuse_costs(layers, config, stage=1)
    accept = layers.corrected_iou(config.dbc_enabled) >= config.match_gate
    if config.pmm_enabled:
        accept |= layers.pmm <= -config.pmm_gate
    return _solve(fused, accept, rows, cols)


def associate_stage2(layers: CostMatrix, config: AssocConfig) -> MatchResult:
    """Low-confidence (BYTE) matching on ``-IoU`` plus the centroid term."""
    rows, cols = layers.shape
    if rows == 0 or cols == 0:
        return _solve(None, None, rows, cols)
    fused = fuse_costs(layers, config, stage=2)
    accept = layers.corrected_iou(config.dbc_enabled) >= config.match_gate
    return _solve(fused, accept, rows, cols)


def associate_stage3(last_obs_iou, config: AssocConfig) -> MatchResult:
    """Recovery: overlap between each track's last observed box and the
    leftover detections, accepted above ``recovery_iou_thresh``."""
    last_obs_iou = np.asarray(last_obs_iou, dtype=float)
    rows, cols = last_obs_iou.shape
    if rows == 0 or cols == 0:
        return _solve(None, None, rows, cols)
    accept = last_obs_iou > config.recovery_iou_thresh
    return _solve(-last_obs_iou, accept, rows, cols)


def remap(result: MatchResult, row_ids: Sequence[int], col_ids: Sequence[int]) -> MatchResult:
    """Translate stage-local indices back to caller indices."""
    return MatchResult(
        [(row_ids[r], col_ids[c]) for r, c in result.matches],
        [row_ids[r] for r in result.unmatched_tracks],
        [col_ids[c] for c in result.unmatched_dets],
    )
