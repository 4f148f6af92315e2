"""Frame-loop orchestration: predict, compute cues, associate in three
stages, update state, manage track lifecycles."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

import numpy as np

from . import appearance as app
from .association import (CostMatrix, associate_stage1, associate_stage2,
                          associate_stage3, remap)
from .core import AssocConfig, BBox, Detection, FlowField, Mask, iou, mask_centroid, mask_pixels
from .dataio import TrackRecord
from .errors import DegeneratePixelSet, MissingFlowWhenPixelCuesEnabled, OutOfOrderFrame
from .motion import (DEFAULT_KF, KFParams, KFState, ObservationHistory, kf_init,
                     kf_predict, kf_update, ocm_cost)
from .pixel_cues import (FlowStats, cdm_cost_row, dbc_merge_stats, dbc_should_record,
                         dbc_trigger, flow_box, flow_magnitude_stats, pdf_filter,
                         pmm_cost, warp_pixels)

log = logging.getLogger(__name__)


class Status(enum.Enum):
    TENTATIVE = "Tentative"
    ACTIVE = "Active"
    LOST = "Lost"


@dataclass
class Track:
    id: int
    kf: KFState
    history: ObservationHistory
    last_box: BBox
    last_obs_frame: int
    born_index: int
    last_mask: Optional[Mask] = None
    flow_stats: FlowStats = field(default_factory=FlowStats)
    feature: Optional[np.ndarray] = None
    status: Status = Status.TENTATIVE
    hits: int = 1
    time_since_update: int = 0
    pred_box: Optional[BBox] = None
    last_det: Optional[Detection] = None


@dataclass
class FrameInput:
    """Detections of one frame. ``flow`` maps frame ``t-1`` pixels to frame ``t``."""

    frame: int
    image_size: Tuple[int, int]  # (w, h)
    detections: List[Detection]
    flow: Optional[FlowField] = None

    def __post_init__(self):
        for d in self.detections:
            if d.frame != self.frame:
                raise ValueError(f"detection of frame {d.frame} in frame {self.frame} input")


@dataclass
class _PixelCue:
    pixels: np.ndarray          # track pixels at t-1
    warped: np.ndarray          # the same pixels moved into frame t
    box: Optional[BBox]         # flow-derived box, None when degenerate
    stats: FlowStats            # magnitude moments of ``pixels``
    triggered: bool


def _box_pixels(box: BBox, width: int, height: int) -> np.ndarray:
    x0 = max(int(np.floor(box.x)), 0)
    y0 = max(int(np.floor(box.y)), 0)
    x1 = min(int(np.ceil(box.x + box.w)), width)
    y1 = min(int(np.ceil(box.y + box.h)), height)
    if x1 <= x0 or y1 <= y0:
        return np.zeros((0, 2))
    xs, ys = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1), indexing="ij")
    return np.stack([xs.ravel(), ys.ravel()], axis=1).astype(float)


def _box_mask(box: BBox, width: int, height: int) -> Mask:
    grid = np.zeros((height, width), dtype=bool)
    pts = _box_pixels(box, width, height).astype(int)
    grid[pts[:, 1], pts[:, 0]] = True
    return Mask.from_array(grid)


class Tracker:
    """Single-sequence tracker; not thread-safe."""

    def __init__(self, config: Optional[AssocConfig] = None, kf_params: KFParams = DEFAULT_KF):
        self.config = config or AssocConfig()
        self.kf_params = kf_params
        self.tracks: List[Track] = []
        self.frame_count = 0
        self.last_frame: Optional[int] = None
        self._next_id = 1
        self._warned_flow = False

    # -- cue computation ---------------------------------------------------

    def _pixel_cue(self, trk: Track, frame: FrameInput) -> Optional[_PixelCue]:
        cfg = self.config
        if not (cfg.pmm_enabled or cfg.dbc_enabled):
            return None
        if trk.last_obs_frame != frame.frame - 1 or frame.flow is None:
            return None
        if cfg.pdf_enabled:
            base = _box_pixels(trk.last_box, frame.flow.width, frame.flow.height)
            pixels = pdf_filter(base, frame.flow, trk.last_box, cfg.pdf_tau_m, cfg.pdf_alpha)
        elif trk.last_mask is not None:
            pixels = mask_pixels(trk.last_mask)
        else:
            return None
        if len(pixels) == 0:
            return None
        warped = warp_pixels(pixels, frame.flow)
        mean, std, n = flow_magnitude_stats(pixels, frame.flow)
        try:
            fbox = flow_box(warped)
        except DegeneratePixelSet:
            fbox = None
        triggered = bool(cfg.dbc_enabled and fbox is not None and dbc_trigger(trk.flow_stats, mean))
        return _PixelCue(pixels, warped, fbox, FlowStats(n, mean, std), triggered)

    def _layers(self, tracks, cues, dets, frame: FrameInput, stage: int) -> CostMatrix:
        cfg = self.config
        shape = (len(tracks), len(dets))
        kf_iou = np.zeros(shape)
        ocm = np.zeros(shape)
        flow_iou = np.zeros(shape)
        pmm = np.zeros(shape)
        cdm = np.zeros(shape)
        appearance = np.zeros(shape)
        triggered = np.zeros(len(tracks), dtype=bool)
        det_masks = ([self._det_grid(d, frame) for d in dets]
                     if stage == 1 and cfg.pmm_enabled and cues else [])
        for i, trk in enumerate(tracks):
            cue = cues.get(trk.id)
            for j, d in enumerate(dets):
                kf_iou[i, j] = iou(trk.pred_box, d.box)
                if cfg.lambda_ocm:
                    ocm[i, j] = ocm_cost(trk.history, d.box, cfg.ocm_delta_t)
            if cue is not None:
                triggered[i] = cue.triggered
                if cue.box is not None:
                    flow_iou[i] = [iou(cue.box, d.box) for d in dets]
                if stage == 1 and cfg.pmm_enabled and len(cue.warped):
                    for j, m in enumerate(det_masks):
                        if m is not None:
                            pmm[i, j] = pmm_cost(cue.warped, m)
            if stage == 2 and cfg.cdm_enabled and trk.last_mask is not None and trk.last_mask.pixel_count():
                cols = [j for j, d in enumerate(dets)
                        if d.mask is not None and d.mask.pixel_count()]
                if cols:
                    tx, ty = mask_centroid(trk.last_mask)
                    dist = []
                    for j in cols:
                        dx, dy = mask_centroid(dets[j].mask)
                        dist.append(float(np.hypot(tx - dx, ty - dy)))
                    cdm[i, cols] = cdm_cost_row(dist, cfg.cdm_epsilon)
        if cfg.appearance_enabled and (stage == 1 or cfg.stage2_appearance):
            appearance = app.appearance_cost_matrix([t.feature for t in tracks],
                                                    [d.embedding for d in dets])
        return CostMatrix(kf_iou, ocm, flow_iou, triggered, pmm, cdm, appearance)

    def _det_grid(self, det: Detection, frame: FrameInput) -> Optional[np.ndarray]:
        if det.mask is not None:
            return det.mask.to_array()
        if self.config.pdf_enabled and frame.flow is not None:
            return _box_mask(det.box, frame.flow.width, frame.flow.height).to_array()
        return None

    # -- main loop -----------------------------------------------------------

    def step(self, frame: FrameInput) -> List[TrackRecord]:
        cfg = self.config
        t = frame.frame
        if self.last_frame is not None and t <= self.last_frame:
            raise OutOfOrderFrame(f"frame {t} after frame {self.last_frame}")
        self.last_frame = t
        self.frame_count += 1
        self._check_masks(frame)

        for trk in self.tracks:
            trk.kf, trk.pred_box = kf_predict(trk.kf, self.kf_params)

        if frame.flow is None and (cfg.pmm_enabled or cfg.dbc_enabled):
            needs = any(trk.last_obs_frame == t - 1 and (trk.last_mask is not None or cfg.pdf_enabled)
                        for trk in self.tracks)
            if needs:
                if cfg.strict_flow:
                    raise MissingFlowWhenPixelCuesEnabled(f"no flow for frame {t}")
                if not self._warned_flow:
                    log.warning("no optical flow for frame %d; pixel-motion cues fall back to neutral", t)
                    self._warned_flow = True

        cues = {}
        for trk in self.tracks:
            cue = self._pixel_cue(trk, frame)
            if cue is not None:
                cues[trk.id] = cue

        dets = frame.detections
        high = [j for j, d in enumerate(dets) if d.confidence >= cfg.high_conf_thresh]
        low = [j for j, d in enumerate(dets)
               if cfg.low_conf_thresh <= d.confidence < cfg.high_conf_thresh]

        all_tracks = list(range(len(self.tracks)))
        matches = []

        # stage 1: high-confidence detections against every track
        layers = self._layers(self.tracks, cues, [dets[j] for j in high], frame, stage=1)
        r1 = remap(associate_stage1(layers, cfg), all_tracks, high)
        matches += r1.matches

        # stage 2: low-confidence detections against leftover tracks
        rest = r1.unmatched_tracks
        layers = self._layers([self.tracks[i] for i in rest], cues,
                              [dets[j] for j in low], frame, stage=2)
        r2 = remap(associate_stage2(layers, cfg), rest, low)
        matches += r2.matches

        # stage 3: recover from last observed boxes with leftover high detections
        rest = r2.unmatched_tracks
        left_high = r1.unmatched_dets
        last_iou = np.array([[iou(self.tracks[i].last_box, dets[j].box) for j in left_high]
                             for i in rest]).reshape(len(rest), len(left_high))
        r3 = remap(associate_stage3(last_iou, cfg), rest, left_high)
        matches += r3.matches

        matched_tracks = set()
        for ti, dj in matches:
            self._apply_match(self.tracks[ti], dets[dj], cues.get(self.tracks[ti].id), t)
            matched_tracks.add(ti)

        if cfg.appearance_enabled and matches:
            ordered = sorted(matches, key=lambda m: m[1])
            mdets = [dets[dj] for _, dj in ordered]
            partition = app.build_clusters(mdets, cfg.cluster_iou_thresh) if cfg.careid_enabled else None
            local = [(k, k) for k in range(len(ordered))]
            feats = app.careid_update([self.tracks[ti].feature for ti, _ in ordered], local,
                                      [d.embedding for d in mdets], partition, cfg.ema_alpha,
                                      enabled=cfg.careid_enabled)
            for (ti, _), f in zip(ordered, feats):
                self.tracks[ti].feature = f

        used_dets = {dj for _, dj in matches}
        for j in r3.unmatched_dets:
            if j not in used_dets:
                self._birth(dets[j], t)

        survivors = []
        for k, trk in enumerate(self.tracks):
            if k < len(all_tracks) and k not in matched_tracks:
                trk.time_since_update += 1
                trk.status = Status.LOST
                if trk.time_since_update > cfg.max_age:
                    continue
            survivors.append(trk)
        self.tracks = survivors

        records = []
        for trk in self.tracks:
            if trk.status is Status.ACTIVE and trk.time_since_update == 0:
                d = trk.last_det
                records.append(TrackRecord(t, trk.id, d.box, d.confidence))
        records.sort(key=lambda r: r.track_id)
        return records

    def _check_masks(self, frame: FrameInput):
        w, h = frame.image_size
        for d in frame.detections:
            if d.mask is not None and (d.mask.width, d.mask.height) != (w, h):
                raise ValueError(f"mask of detection {d.det_id} in frame {frame.frame} "
                                 f"is {d.mask.width}x{d.mask.height}, image is {w}x{h}")
        if frame.flow is not None and (frame.flow.width, frame.flow.height) != (w, h):
            raise ValueError(f"flow for frame {frame.frame} does not match image size")

    def _apply_match(self, trk: Track, det: Detection, cue: Optional[_PixelCue], t: int):
        cfg = self.config
        if cfg.dbc_enabled and cue is not None and cue.box is not None:
            kf_i = iou(trk.pred_box, det.box)
            flow_i = iou(cue.box, det.box)
            if dbc_should_record(kf_i, flow_i, cfg.tau_d):
                trk.flow_stats = dbc_merge_stats(trk.flow_stats, cue.stats)
        trk.kf = kf_update(trk.kf, det.box, self.kf_params)
        trk.history.push(t, det.box)
        trk.last_box = det.box
        trk.last_mask = det.mask
        trk.last_obs_frame = t
        trk.hits += 1
        trk.time_since_update = 0
        trk.last_det = det
        if trk.hits >= cfg.min_hits or trk.born_index <= cfg.min_hits:
            trk.status = Status.ACTIVE
        else:
            trk.status = Status.TENTATIVE

    def _birth(self, det: Detection, t: int):
        cfg = self.config
        hist = ObservationHistory(cfg.ocm_delta_t + 1)
        hist.push(t, det.box)
        trk = Track(
            id=self._next_id,
            kf=kf_init(det.box, self.kf_params),
            history=hist,
            last_box=det.box,
            last_obs_frame=t,
            born_index=self.frame_count,
            last_mask=det.mask,
            feature=(np.asarray(det.embedding, float).copy()
                     if cfg.appearance_enabled and det.embedding is not None else None),
        )
        trk.pred_box = det.box
        trk.last_det = det
        self._next_id += 1
        if trk.hits >= cfg.min_hits or trk.born_index <= cfg.min_hits:
            trk.status = Status.ACTIVE
        self.tracks.append(trk)


def run_sequence(inputs: Iterable[FrameInput], config: Optional[AssocConfig] = None,
                 kf_params: KFParams = DEFAULT_KF) -> List[TrackRecord]:
    tracker = Tracker(config, kf_params)
    out = []
    for frame in inputs:
        out.extend(tracker.step(frame))
    out.sort(key=lambda r: (r.frame, r.track_id))
    return out
