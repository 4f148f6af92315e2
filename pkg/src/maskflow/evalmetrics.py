"""MOTA, IDF1 and identity switches against ground truth."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .association import hungarian
from .core import iou
from .errors import EmptyGroundTruth


@dataclass
class FrameCorrespondence:
    frame: int
    matches: List[Tuple[int, int]]   # (gt id, pred id)
    fn: int
    fp: int


@dataclass
class MetricsReport:
    mota: float
    idf1: float
    id_switches: int
    false_positives: int
    false_negatives: int
    n_gt: int
    idtp: int = 0
    idfp: int = 0
    idfn: int = 0
    per_sequence: Dict[str, "MetricsReport"] = field(default_factory=dict)

    def as_dict(self):
        return {
            "mota": self.mota,
            "idf1": self.idf1,
            "id_switches": self.id_switches,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "n_gt": self.n_gt,
            "idtp": self.idtp,
            "idfp": self.idfp,
            "idfn": self.idfn,
        }

    def to_text(self) -> str:
        return (f"MOTA {self.mota:.4f}  IDF1 {self.idf1:.4f}  IDSW {self.id_switches}  "
                f"FP {self.false_positives}  FN {self.false_negatives}  GT {self.n_gt}")

    def to_keyvalue(self) -> str:
        lines = []
        for k, v in self.as_dict().items():
            lines.append(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}")
        for name, sub in sorted(self.per_sequence.items()):
            for k, v in sub.as_dict().items():
                lines.append(f"{name}.{k}={v:.6f}" if isinstance(v, float) else f"{name}.{k}={v}")
        return "\n".join(lines) + "\n"


def _by_frame(records):
    out = defaultdict(list)
    for r in records:
        out[r.frame].append(r)
    return out


def _valid_pairs(gt_boxes, pred_boxes, iou_thresh):
    ious = np.array([[iou(g, p) for p in pred_boxes] for g in gt_boxes]).reshape(
        len(gt_boxes), len(pred_boxes))
    return ious, ious >= iou_thresh


def frame_match(gt_boxes, pred_boxes, iou_thresh=0.5) -> List[Tuple[int, int]]:
    """Index pairs ``(gt, pred)`` of a maximum matching on pairs with
    ``IoU >= iou_thresh``; among maximum matchings total IoU is maximal."""
    if not gt_boxes or not pred_boxes:
        return []
    ious, valid = _valid_pairs(gt_boxes, pred_boxes, iou_thresh)
    # a constant bonus per valid pair makes cardinality dominate total IoU
    bonus = min(len(gt_boxes), len(pred_boxes)) + 1.0
    cost = np.where(valid, -(bonus + ious), 0.0)
    return [(g, p) for g, p in hungarian(cost) if valid[g, p]]


def correspondences(gt, pred, iou_thresh=0.5) -> List[FrameCorrespondence]:
    """Per-frame matches with CLEAR-MOT continuity: a gt/pred pair matched in
    an earlier frame is kept while its IoU stays above threshold, and only
    the remaining boxes go through :func:`frame_match`."""
    gt_f, pred_f = _by_frame(gt), _by_frame(pred)
    last: Dict[int, int] = {}
    out = []
    for t in sorted(set(gt_f) | set(pred_f)):
        g, p = gt_f.get(t, []), pred_f.get(t, [])
        p_index = {r.track_id: j for j, r in enumerate(p)}
        kept = []
        for i, rg in enumerate(g):
            j = p_index.get(last.get(rg.track_id))
            if j is not None and iou(rg.box, p[j].box) >= iou_thresh:
                kept.append((i, j))
        used_g = {i for i, _ in kept}
        used_p = {j for _, j in kept}
        rest_g = [i for i in range(len(g)) if i not in used_g]
        rest_p = [j for j in range(len(p)) if j not in used_p]
        pairs = kept + [(rest_g[a], rest_p[b]) for a, b in frame_match(
            [g[i].box for i in rest_g], [p[j].box for j in rest_p], iou_thresh)]
        matches = [(g[i].track_id, p[j].track_id) for i, j in sorted(pairs)]
        for gid, pid in matches:
            last[gid] = pid
        out.append(FrameCorrespondence(t, matches, fn=len(g) - len(pairs),
                                       fp=len(p) - len(pairs)))
    return out


def compute_mota(corr: Sequence[FrameCorrespondence]):
    """``(mota, fp, fn, idsw)``. A switch is a gt identity matched to a
    different predicted id than at its previous match."""
    n_gt = sum(len(c.matches) + c.fn for c in corr)
    if n_gt == 0:
        raise EmptyGroundTruth("no ground-truth boxes")
    fp = sum(c.fp for c in corr)
    fn = sum(c.fn for c in corr)
    last = {}
    idsw = 0
    for c in corr:
        for g, p in c.matches:
            if g in last and last[g] != p:
                idsw += 1
            last[g] = p
    return 1.0 - (fp + fn + idsw) / n_gt, fp, fn, idsw


def compute_idf1(gt, pred, iou_thresh=0.5):
    """``(idf1, idtp, idfp, idfn)`` from the optimal one-to-one identity map."""
    if not gt:
        raise EmptyGroundTruth("no ground-truth boxes")
    if not pred:
        return 0.0, 0, 0, len(gt)
    gt_ids = sorted({r.track_id for r in gt})
    pr_ids = sorted({r.track_id for r in pred})
    gi = {k: i for i, k in enumerate(gt_ids)}
    pi = {k: i for i, k in enumerate(pr_ids)}
    co = np.zeros((len(gt_ids), len(pr_ids)))
    gt_f, pred_f = _by_frame(gt), _by_frame(pred)
    for t, g in gt_f.items():
        p = pred_f.get(t, [])
        for rg in g:
            for rp in p:
                if iou(rg.box, rp.box) >= iou_thresh:
                    co[gi[rg.track_id], pi[rp.track_id]] += 1
    idtp = int(sum(co[i, j] for i, j in hungarian(-co)))
    idfn = len(gt) - idtp
    idfp = len(pred) - idtp
    return 2 * idtp / (2 * idtp + idfp + idfn), idtp, idfp, idfn


def evaluate(gt, pred, iou_thresh=0.5) -> MetricsReport:
    corr = correspondences(gt, pred, iou_thresh)
    mota, fp, fn, idsw = compute_mota(corr)
    idf1, idtp, idfp, idfn = compute_idf1(gt, pred, iou_thresh)
    return MetricsReport(mota, idf1, idsw, fp, fn, len(gt), idtp, idfp, idfn)


def combine(reports: Dict[str, MetricsReport]) -> MetricsReport:
    """Pool per-sequence counts into one report (counts add, ratios recomputed)."""
    n_gt = sum(r.n_gt for r in reports.values())
    if n_gt == 0:
        raise EmptyGroundTruth("no ground-truth boxes")
    fp = sum(r.false_positives for r in reports.values())
    fn = sum(r.false_negatives for r in reports.values())
    idsw = sum(r.id_switches for r in reports.values())
    idtp = sum(r.idtp for r in reports.values())
    idfp = sum(r.idfp for r in reports.values())
    idfn = sum(r.idfn for r in reports.values())
    denom = 2 * idtp + idfp + idfn
    return MetricsReport(1.0 - (fp + fn + idsw) / n_gt, 2 * idtp / denom if denom else 0.0,
                         idsw, fp, fn, n_gt, idtp, idfp, idfn, dict(reports))
