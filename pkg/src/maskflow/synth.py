"""Deterministic synthetic scenes with exact masks, flow and ground truth.

Objects are rasterized on an integer anchor so that rigid objects translate
by whole pixels and their flow is exact. Later objects occlude earlier ones.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .core import BBox, Detection, FlowField, Mask
from .dataio import (FLOW_NAME, TrackRecord, atomic_write, mask_line, write_detections,
                     write_embeddings, write_flow, write_gt)
from .errors import SpecInfeasible

OCCLUSION_COVERAGE = 0.4


@dataclass(frozen=True)
class Linear:
    vx: float
    vy: float


@dataclass(frozen=True)
class Sinusoidal:
    axis: str          # "x" or "y"
    amplitude: float   # px
    period: float      # frames
    drift_vx: float = 0.0
    drift_vy: float = 0.0
    phase: float = 0.0  # radians


@dataclass(frozen=True)
class Crossing:
    """Pass through the partner's centre (plus ``offset``) at ``crossing_frame``."""

    partner: int
    crossing_frame: int
    vx: float
    vy: float
    offset: Tuple[float, float] = (0.0, 0.0)


Motion = Union[Linear, Sinusoidal, Crossing]


@dataclass(frozen=True)
class ObjectSpec:
    shape: str                       # "rectangle" or "ellipse"
    base_size: Tuple[int, int]       # (w, h) px
    start: Tuple[float, float]       # centre at appear_frame; unused by Crossing
    motion: Motion
    deform: Optional[Tuple[float, float]] = None  # (amplitude fraction, period frames)
    appear_frame: int = 1
    disappear_frame: Optional[int] = None          # last live frame, inclusive


@dataclass(frozen=True)
class NoiseSpec:
    bbox_jitter_sigma: float = 0.0
    conf_base: float = 0.9
    conf_occluded: float = 0.4
    embed_noise_sigma: float = 0.0
    dropout_prob: float = 0.0

    def __post_init__(self):
        if self.bbox_jitter_sigma < 0 or self.embed_noise_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")
        if not (0 <= self.conf_occluded <= 1 and 0 <= self.conf_base <= 1):
            raise ValueError("confidences must lie in [0, 1]")
        if not 0 <= self.dropout_prob < 1:
            raise ValueError("dropout_prob must lie in [0, 1)")


@dataclass(frozen=True)
class SceneSpec:
    image_size: Tuple[int, int]       # (w, h)
    n_frames: int
    objects: Tuple[ObjectSpec, ...]
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    embed_dim: int = 32

    def __post_init__(self):
        if self.n_frames < 2:
            raise ValueError("a scene needs at least two frames")
        if not self.objects:
            raise ValueError("a scene needs at least one object")


@dataclass
class SceneBundle:
    spec: SceneSpec
    gt: List[TrackRecord]
    detections: Dict[int, List[Detection]]       # frame -> detections (masks/embeddings attached)
    flows: Dict[int, FlowField]                  # t -> flow from frame t to t+1
    labels: Dict[int, np.ndarray]                # frame -> label image (-1 background)
    footprints: Dict[int, Dict[int, np.ndarray]]  # frame -> object -> full boolean raster

    def frame_inputs(self, masks=True, flow=True, embeddings=True):
        """Tracker inputs; flags drop the corresponding cue."""
        from .tracker import FrameInput

        out = []
        w, h = self.spec.image_size
        for t in range(1, self.spec.n_frames + 1):
            dets = []
            for d in self.detections.get(t, []):
                dets.append(Detection(d.frame, d.det_id, d.box, d.confidence,
                                      d.mask if masks else None,
                                      d.embedding if embeddings else None))
            f = self.flows.get(t - 1) if flow else None
            out.append(FrameInput(t, (w, h), dets, f))
        return out

    def write(self, out_dir) -> Dict[str, str]:
        out = Path(out_dir)
        (out / "flow").mkdir(parents=True, exist_ok=True)
        all_dets = [d for t in sorted(self.detections) for d in self.detections[t]]
        write_gt(self.gt, out / "gt.txt")
        write_detections(all_dets, out / "dets.txt")
        atomic_write(out / "masks.txt",
                     "".join(mask_line(d.frame, d.det_id, d.mask) + "\n" for d in all_dets))
        write_embeddings([(d.frame, d.det_id, d.embedding) for d in all_dets], out / "embeds.txt")
        for t in sorted(self.flows):
            write_flow(self.flows[t], out / "flow" / FLOW_NAME.format(t))
        manifest = {
            "image_size": list(self.spec.image_size),
            "n_frames": self.spec.n_frames,
            "embed_dim": self.spec.embed_dim,
            "seed": self.spec.seed,
            "n_identities": len(self.spec.objects),
            "files": {
                "gt": "gt.txt",
                "dets": "dets.txt",
                "masks": "masks.txt",
                "embeds": "embeds.txt",
                "flow_dir": "flow",
            },
        }
        atomic_write(out / "scene.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return manifest


def _round(v):
    return int(math.floor(v + 0.5))


def _alive(obj: ObjectSpec, t: int, n_frames: int) -> bool:
    end = obj.disappear_frame if obj.disappear_frame is not None else n_frames
    return obj.appear_frame <= t <= end


def object_center(spec: SceneSpec, k: int, t: int, _depth=0) -> Tuple[float, float]:
    """Real-valued centre of object ``k`` at frame ``t``."""
    obj = spec.objects[k]
    m = obj.motion
    dt = t - obj.appear_frame
    if isinstance(m, Linear):
        return (obj.start[0] + m.vx * dt, obj.start[1] + m.vy * dt)
    if isinstance(m, Sinusoidal):
        wave = m.amplitude * math.sin(2 * math.pi * dt / m.period + m.phase)
        cx = obj.start[0] + m.drift_vx * dt
        cy = obj.start[1] + m.drift_vy * dt
        if m.axis == "x":
            cx += wave
        else:
            cy += wave
        return (cx, cy)
    if isinstance(m, Crossing):
        if _depth > len(spec.objects) or m.partner == k:
            raise SpecInfeasible(f"object {k}: crossing partners form a cycle")
        px, py = object_center(spec, m.partner, m.crossing_frame, _depth + 1)
        d = t - m.crossing_frame
        return (px + m.offset[0] + m.vx * d, py + m.offset[1] + m.vy * d)
    raise TypeError(f"unknown motion {m!r}")


def object_size(obj: ObjectSpec, t: int) -> Tuple[int, int]:
    w, h = obj.base_size
    if obj.deform is None:
        return (w, h)
    amp, period = obj.deform
    s = 1.0 + amp * math.sin(2 * math.pi * (t - obj.appear_frame) / period)
    return (max(2, _round(w * s)), max(2, _round(h * s)))


def _raster_geometry(spec, k, t):
    cx, cy = object_center(spec, k, t)
    w, h = object_size(spec.objects[k], t)
    return _round(cx - w / 2.0), _round(cy - h / 2.0), w, h


def _rasterize(shape, x0, y0, w, h, W, H) -> np.ndarray:
    grid = np.zeros((H, W), dtype=bool)
    if shape == "rectangle":
        grid[y0:y0 + h, x0:x0 + w] = True
        return grid
    if shape != "ellipse":
        raise ValueError(f"unknown shape {shape!r}")
    ys, xs = np.mgrid[y0:y0 + h, x0:x0 + w]
    ex = (xs + 0.5 - (x0 + w / 2.0)) / (w / 2.0)
    ey = (ys + 0.5 - (y0 + h / 2.0)) / (h / 2.0)
    grid[y0:y0 + h, x0:x0 + w] = ex * ex + ey * ey <= 1.0
    return grid


def validate(spec: SceneSpec):
    W, H = spec.image_size
    for k, obj in enumerate(spec.objects):
        if isinstance(obj.motion, Crossing) and not 0 <= obj.motion.partner < len(spec.objects):
            raise SpecInfeasible(f"object {k}: unknown crossing partner {obj.motion.partner}")
        for t in range(1, spec.n_frames + 1):
            if not _alive(obj, t, spec.n_frames):
                continue
            x0, y0, w, h = _raster_geometry(spec, k, t)
            if x0 < 0 or y0 < 0 or x0 + w > W or y0 + h > H:
                raise SpecInfeasible(
                    f"object {k} leaves the {W}x{H} image at frame {t} (box {x0},{y0},{w},{h})")


def _identity_basis(rng, n, dim):
    basis = rng.standard_normal((n, dim))
    return basis / np.linalg.norm(basis, axis=1, keepdims=True)


def generate(spec: SceneSpec) -> SceneBundle:
    validate(spec)
    W, H = spec.image_size
    n_obj = len(spec.objects)
    noise = spec.noise
    rng = np.random.default_rng(spec.seed)
    basis = _identity_basis(rng, n_obj, spec.embed_dim)

    geom: Dict[int, Dict[int, Tuple[int, int, int, int]]] = {}
    footprints: Dict[int, Dict[int, np.ndarray]] = {}
    labels: Dict[int, np.ndarray] = {}
    for t in range(1, spec.n_frames + 1):
        geom[t], footprints[t] = {}, {}
        lab = np.full((H, W), -1, dtype=np.int32)
        for k, obj in enumerate(spec.objects):
            if not _alive(obj, t, spec.n_frames):
                continue
            g = _raster_geometry(spec, k, t)
            fp = _rasterize(obj.shape, *g, W, H)
            geom[t][k] = g
            footprints[t][k] = fp
            lab[fp] = k
        labels[t] = lab

    flows = {}
    for t in range(1, spec.n_frames):
        u = np.zeros((H, W), dtype=np.float64)
        v = np.zeros((H, W), dtype=np.float64)
        for k, (x0, y0, w, h) in geom[t].items():
            if k not in geom[t + 1]:
                continue
            x1, y1, w1, h1 = geom[t + 1][k]
            ys, xs = np.nonzero(labels[t] == k)
            if w1 == w and h1 == h:
                u[ys, xs] = x1 - x0
                v[ys, xs] = y1 - y0
            else:
                # scale about the raster centre
                sx, sy = w1 / w, h1 / h
                c0x, c0y = x0 + w / 2.0, y0 + h / 2.0
                c1x, c1y = x1 + w1 / 2.0, y1 + h1 / 2.0
                u[ys, xs] = c1x + (xs + 0.5 - c0x) * sx - 0.5 - xs
                v[ys, xs] = c1y + (ys + 0.5 - c0y) * sy - 0.5 - ys
        flows[t] = FlowField(H, W, u, v)

    gt = []
    detections: Dict[int, List[Detection]] = {}
    for t in range(1, spec.n_frames + 1):
        frame_dets = []
        for k in sorted(geom[t]):
            x0, y0, w, h = geom[t][k]
            fp = footprints[t][k]
            ys_f, xs_f = np.nonzero(fp)
            gt.append(TrackRecord(t, k + 1, BBox(float(xs_f.min()), float(ys_f.min()),
                                                 float(xs_f.max() - xs_f.min() + 1),
                                                 float(ys_f.max() - ys_f.min() + 1)), 1.0))
            visible = labels[t] == k
            n_fp = int(fp.sum())
            n_vis = int(visible.sum())
            others = np.zeros_like(fp)
            occluder, best = None, 0
            for j, fpj in footprints[t].items():
                if j == k:
                    continue
                ov = int((fp & fpj).sum())
                others |= fpj
                if ov > best:
                    occluder, best = j, ov
            coverage = (fp & others).sum() / n_fp
            # draws happen for every live object so dropout never shifts the stream
            jitter = rng.normal(0.0, 1.0, 4) * noise.bbox_jitter_sigma
            emb_noise = rng.normal(0.0, 1.0, spec.embed_dim) * noise.embed_noise_sigma
            dropped = rng.random() < noise.dropout_prob
            if n_vis == 0 or dropped:
                continue
            ys, xs = np.nonzero(visible)
            bx, by = float(xs.min()), float(ys.min())
            bw, bh = float(xs.max() - xs.min() + 1), float(ys.max() - ys.min() + 1)
            if noise.bbox_jitter_sigma > 0:
                bx += jitter[0]
                by += jitter[1]
                bw = max(1.0, bw + jitter[2])
                bh = max(1.0, bh + jitter[3])
            conf = noise.conf_occluded if coverage >= OCCLUSION_COVERAGE else noise.conf_base
            vis_frac = n_vis / n_fp
            emb = vis_frac * basis[k] + emb_noise
            if occluder is not None and vis_frac < 1.0:
                emb = emb + (1.0 - vis_frac) * basis[occluder]
            emb = emb / np.linalg.norm(emb)
            frame_dets.append(Detection(t, 0, BBox(bx, by, bw, bh), conf,
                                        Mask.from_array(visible), emb))
        order = rng.permutation(len(frame_dets))
        shuffled = []
        for new_id, idx in enumerate(order):
            d = frame_dets[idx]
            d.det_id = new_id
            shuffled.append(d)
        detections[t] = shuffled
    gt.sort(key=lambda r: (r.frame, r.track_id))
    return SceneBundle(spec, gt, detections, flows, labels, footprints)


def _lane(y, x, vx, size=(20, 30), shape="rectangle"):
    return ObjectSpec(shape, size, (x, y), Linear(vx, 0.0))


def builtin_scenarios() -> Dict[str, SceneSpec]:
    low = NoiseSpec(bbox_jitter_sigma=0.5, conf_base=0.9, conf_occluded=0.4,
                    embed_noise_sigma=0.05, dropout_prob=0.0)
    mid = NoiseSpec(bbox_jitter_sigma=1.0, conf_base=0.9, conf_occluded=0.4,
                    embed_noise_sigma=0.05, dropout_prob=0.02)
    scenes = {
        "linear_easy": SceneSpec(
            (240, 180), 40,
            (
                _lane(30, 30, 3.0),
                ObjectSpec("ellipse", (24, 24), (200, 90), Linear(-3.0, 0.0)),
                ObjectSpec("rectangle", (18, 26), (60, 150), Linear(2.0, -0.5)),
            ),
            low, seed=0),
        "crossing_pair": SceneSpec(
            (240, 180), 50,
            (
                ObjectSpec("rectangle", (24, 40), (40, 90), Sinusoidal("x", 30.0, 18.0, drift_vx=3.0)),
                ObjectSpec("rectangle", (24, 40), (0, 0), Crossing(0, 25, -3.0, 0.0, (0.0, 4.0))),
            ),
            mid, seed=0),
        "nonlinear_dance": SceneSpec(
            (240, 180), 60,
            (
                ObjectSpec("ellipse", (26, 44), (50, 90), Sinusoidal("x", 22.0, 16.0),
                           deform=(0.25, 10.0)),
                ObjectSpec("ellipse", (26, 44), (100, 90), Sinusoidal("x", 22.0, 16.0, phase=math.pi),
                           deform=(0.25, 12.0)),
                ObjectSpec("rectangle", (24, 40), (150, 80), Sinusoidal("y", 18.0, 14.0),
                           deform=(0.2, 9.0)),
                ObjectSpec("ellipse", (26, 42), (190, 95), Sinusoidal("x", 14.0, 11.0, phase=1.0),
                           deform=(0.3, 8.0)),
            ),
            mid, seed=0),
        "crowded_small": SceneSpec(
            (240, 180), 40,
            tuple(
                ObjectSpec("rectangle" if i % 2 else "ellipse", (16, 24),
                           (40 + 22 * i, 60 + 40 * (i % 2)),
                           Sinusoidal("y", 16.0, 20.0 + 2 * i, drift_vx=0.5 if i < 4 else -0.5,
                                      phase=0.7 * i))
                for i in range(8)
            ),
            mid, seed=0),
    }
    for spec in scenes.values():
        validate(spec)
    return scenes


def scenario(name: str, seed: Optional[int] = None, noise: Optional[NoiseSpec] = None) -> SceneSpec:
    scenes = builtin_scenarios()
    if name not in scenes:
        raise KeyError(name)
    spec = scenes[name]
    if seed is not None:
        spec = replace(spec, seed=seed)
    if noise is not None:
        spec = replace(spec, noise=noise)
    return spec


ZERO_NOISE = NoiseSpec(0.0, 0.9, 0.4, 0.0, 0.0)
