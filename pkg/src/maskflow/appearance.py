"""Appearance cues: cosine cost, EMA feature maintenance and the
cluster-aware selective update."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import iou
from .errors import DegenerateFeature


@dataclass
class ClusterPartition:
    clusters: List[List[int]]
    representative: Dict[int, int]  # cluster index -> detection index

    def representatives(self):
        return set(self.representative.values())


def cosine_cost(a, b) -> float:
    return float(1.0 - np.dot(a, b))


def ema_update(track_feat, det_feat, alpha: float) -> np.ndarray:
    blend = alpha * np.asarray(track_feat, float) + (1.0 - alpha) * np.asarray(det_feat, float)
    norm = np.linalg.norm(blend)
    if norm < 1e-9:
        raise DegenerateFeature("EMA blend cancels out")
    return blend / norm


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            # smaller root wins so component labels are order-stable
            if rj < ri:
                ri, rj = rj, ri
            self.parent[rj] = ri


def build_clusters(dets: Sequence, iou_thresh: float) -> ClusterPartition:
    """Connected components of the graph joining detections with IoU above
    ``iou_thresh``. Each component's representative is its most confident
    member, lowest index on ties."""
    n = len(dets)
    uf = _UnionFind(n)
    for i in range(n):
        for j in range(i + 1, n):
            if iou(dets[i].box, dets[j].box) > iou_thresh:
                uf.union(i, j)
    groups: Dict[int, List[int]] = {}
    for i in range(n):
        groups.setdefault(uf.find(i), []).append(i)
    clusters = [groups[r] for r in sorted(groups)]
    rep = {}
    for c, members in enumerate(clusters):
        best = members[0]
        for m in members[1:]:
            if dets[m].confidence > dets[best].confidence:
                best = m
        rep[c] = best
    return ClusterPartition(clusters, rep)


def careid_update(features: List[Optional[np.ndarray]], matches, det_embeds,
                  partition: Optional[ClusterPartition], alpha: float,
                  enabled: bool = True) -> List[Optional[np.ndarray]]:
    """Return refreshed track features after matching.

    ``matches`` are ``(track index, detection index)`` pairs; ``partition``
    indexes the same detections. With ``enabled`` false every matched pair
    updates (plain EMA). Tracks without a feature adopt the detection's.
    """
    out = list(features)
    reps = partition.representatives() if (enabled and partition is not None) else None
    for ti, di in matches:
        emb = det_embeds[di]
        if emb is None:
            continue
        if reps is not None and di not in reps:
            continue
        if out[ti] is None:
            out[ti] = np.asarray(emb, float).copy()
            continue
        try:
            out[ti] = ema_update(out[ti], emb, alpha)
        except DegenerateFeature:
            pass
    return out


def appearance_cost_matrix(track_feats, det_embeds) -> np.ndarray:
    cost = np.zeros((len(track_feats), len(det_embeds)))
    for i, tf in enumerate(track_feats):
        if tf is None:
            continue
        for j, de in enumerate(det_embeds):
            if de is not None:
                cost[i, j] = cosine_cost(tf, de)
    return cost
