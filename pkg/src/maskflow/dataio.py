"""Readers and writers for the interchange formats.

Text formats are comma separated with '.' decimals and LF endings:

* detections  ``frame,det_id,x,y,w,h,conf``
* masks       ``frame,det_id,height,width,r0 r1 r2 ...`` (column-major RLE)
* embeddings  ``frame,det_id,v0,...,v{D-1}``
* tracks/gt   ``frame,id,x,y,w,h,conf,-1,-1,-1`` (MOTChallenge)

Flow is Middlebury ``.flo``; ``flow_%06d.flo`` index ``t`` maps frame ``t``
to frame ``t+1``.
"""

from __future__ import annotations

import math
import os
import struct
import tempfile
from collections import OrderedDict
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from .core import UNIT_NORM_TOL, AssocConfig, BBox, Detection, FlowField, Mask
from .errors import (BadMagic, BadValue, DimMismatch, NonPositiveSize, NotUnitNorm,
                     ParseError, RunSumMismatch, SizeMismatch, TruncatedFile, UnknownKey)

FLO_MAGIC = 202021.25
FLOW_NAME = "flow_{:06d}.flo"


@dataclass(frozen=True)
class TrackRecord:
    frame: int
    track_id: int
    box: BBox
    confidence: float

    def to_line(self) -> str:
        b = self.box
        return (f"{self.frame},{self.track_id},{b.x:.2f},{b.y:.2f},{b.w:.2f},{b.h:.2f},"
                f"{self.confidence:.2f},-1,-1,-1")


def atomic_write(path, data, mode="w"):
    """Write to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        kw = {"newline": ""} if "b" not in mode else {}
        with os.fdopen(fd, mode, **kw) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _lines(path):
    with open(path, "r", encoding="ascii", newline="") as fh:
        text = fh.read()
    for n, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r").strip()
        if line:
            yield n, line


def _num(tok, path, n, kind=float):
    try:
        val = kind(tok)
    except ValueError:
        raise ParseError(f"bad {kind.__name__} value {tok!r}", path, n) from None
    if kind is float and not math.isfinite(val):
        raise ParseError(f"non-finite value {tok!r}", path, n)
    return val


def read_detections(path) -> "OrderedDict[int, List[Detection]]":
    """Detections grouped by frame, frames ascending."""
    frames: Dict[int, List[Detection]] = {}
    for n, line in _lines(path):
        parts = line.split(",")
        if len(parts) != 7:
            raise ParseError(f"expected 7 fields, got {len(parts)}", path, n)
        frame = _num(parts[0], path, n, int)
        det_id = _num(parts[1], path, n, int)
        x, y, w, h, conf = (_num(p, path, n) for p in parts[2:])
        if frame < 1:
            raise ParseError("frame numbers start at 1", path, n)
        if w <= 0 or h <= 0:
            raise NonPositiveSize(f"non-positive box size w={w} h={h}", path, n)
        if not 0 <= conf <= 1:
            raise ParseError(f"confidence {conf} outside [0, 1]", path, n)
        bucket = frames.setdefault(frame, [])
        if any(d.det_id == det_id for d in bucket):
            raise ParseError(f"duplicate det_id {det_id} in frame {frame}", path, n)
        bucket.append(Detection(frame, det_id, BBox(x, y, w, h), conf))
    return OrderedDict(sorted(frames.items()))


def read_masks(path, image_size=None) -> Dict[Tuple[int, int], Mask]:
    """Masks keyed by ``(frame, det_id)``. ``image_size`` is ``(w, h)``; when
    omitted every mask must agree with the first one."""
    out: Dict[Tuple[int, int], Mask] = {}
    for n, line in _lines(path):
        parts = line.split(",")
        if len(parts) != 5:
            raise ParseError(f"expected 5 fields, got {len(parts)}", path, n)
        frame, det_id, h, w = (_num(p, path, n, int) for p in parts[:4])
        if image_size is None:
            image_size = (w, h)
        if (w, h) != tuple(image_size):
            raise SizeMismatch(f"mask is {w}x{h}, image is {image_size[0]}x{image_size[1]}", path, n)
        runs = [_num(tok, path, n, int) for tok in parts[4].split()]
        if any(r < 0 for r in runs):
            raise ParseError("negative run length", path, n)
        if sum(runs) != w * h:
            raise RunSumMismatch(f"runs sum to {sum(runs)}, expected {w * h}", path, n)
        try:
            mask = Mask(h, w, tuple(runs))
        except ValueError as exc:
            raise ParseError(str(exc), path, n) from None
        if (frame, det_id) in out:
            raise ParseError(f"duplicate mask for frame {frame} det {det_id}", path, n)
        out[(frame, det_id)] = mask
    return out


def mask_line(frame, det_id, mask: Mask) -> str:
    return f"{frame},{det_id},{mask.height},{mask.width},{' '.join(map(str, mask.runs))}"


def write_masks(items, path):
    """``items``: iterable of ``(frame, det_id, Mask)``."""
    atomic_write(path, "".join(mask_line(*it) + "\n" for it in items))


def write_flow(flow: FlowField, path):
    h, w = flow.height, flow.width
    data = np.empty((h, w, 2), dtype="<f4")
    data[..., 0] = flow.u
    data[..., 1] = flow.v
    payload = struct.pack("<fii", FLO_MAGIC, w, h) + data.tobytes()
    atomic_write(path, payload, mode="wb")


def read_flow(path) -> FlowField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12:
        raise TruncatedFile(f"header needs 12 bytes, file has {len(raw)}", path)
    magic, w, h = struct.unpack("<fii", raw[:12])
    if magic != np.float32(FLO_MAGIC):
        raise BadMagic(f"magic {magic!r} at byte 0", path)
    if w <= 0 or h <= 0:
        raise BadValue(f"invalid flow size {w}x{h} at byte 4", path)
    need = 12 + 8 * w * h
    if len(raw) < need:
        raise TruncatedFile(f"payload ends at byte {len(raw)}, header declares {need}", path)
    data = np.frombuffer(raw, dtype="<f4", count=2 * w * h, offset=12).reshape(h, w, 2)
    return FlowField(h, w, data[..., 0].copy(), data[..., 1].copy())


def read_embeddings(path, dim=None) -> Dict[Tuple[int, int], np.ndarray]:
    """Unit embeddings keyed by ``(frame, det_id)``; ``dim`` defaults to the
    first line's length."""
    out = {}
    for n, line in _lines(path):
        parts = line.split(",")
        frame = _num(parts[0], path, n, int)
        det_id = _num(parts[1], path, n, int) if len(parts) > 1 else None
        vals = [_num(p, path, n) for p in parts[2:]]
        if dim is None:
            dim = len(vals)
        if len(vals) != dim or dim == 0:
            raise DimMismatch(f"expected {dim} values, got {len(vals)}", path, n)
        vec = np.array(vals, dtype=float)
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise NotUnitNorm(f"norm {norm:.6f} is not unit", path, n)
        out[(frame, det_id)] = vec / norm
    return out


def write_embeddings(items, path):
    """``items``: iterable of ``(frame, det_id, vector)``."""
    lines = []
    for frame, det_id, vec in items:
        lines.append(",".join([str(frame), str(det_id)] + [_f(v) for v in vec]))
    atomic_write(path, "".join(line + "\n" for line in lines))


def _f(v) -> str:
    return repr(float(v))


def write_detections(dets, path):
    lines = [",".join([str(d.frame), str(d.det_id), _f(d.box.x), _f(d.box.y), _f(d.box.w),
                       _f(d.box.h), _f(d.confidence)]) for d in dets]
    atomic_write(path, "".join(line + "\n" for line in lines))


def write_tracks(records, path):
    atomic_write(path, "".join(r.to_line() + "\n" for r in records))


def read_tracks(path) -> List[TrackRecord]:
    """MOTChallenge tracker output or ground truth (extra columns ignored)."""
    out = []
    for n, line in _lines(path):
        parts = line.split(",")
        if len(parts) < 6:
            raise ParseError(f"expected at least 6 fields, got {len(parts)}", path, n)
        frame = _num(parts[0], path, n, int)
        tid = _num(parts[1], path, n, int)
        x, y, w, h = (_num(p, path, n) for p in parts[2:6])
        conf = _num(parts[6], path, n) if len(parts) > 6 else 1.0
        if w <= 0 or h <= 0:
            raise NonPositiveSize(f"non-positive box size w={w} h={h}", path, n)
        out.append(TrackRecord(frame, tid, BBox(x, y, w, h), conf))
    return out


def write_gt(records, path):
    lines = [",".join([str(r.frame), str(r.track_id), _f(r.box.x), _f(r.box.y), _f(r.box.w),
                       _f(r.box.h), "1,1,1"]) for r in records]
    atomic_write(path, "".join(line + "\n" for line in lines))


def read_config(path) -> AssocConfig:
    """Flat ``key = value`` file with ``#`` comments; missing keys keep defaults."""
    types = {f.name: f for f in fields(AssocConfig)}
    values = {}
    for n, line in _lines(path):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", path, n)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise UnknownKey(f"unknown key {key!r}", path, n)
        default = types[key].default
        try:
            if AssocConfig.is_bool_key(key):
                low = raw.lower()
                if low not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(raw)
                val = low in ("true", "1", "yes")
            elif isinstance(default, int):
                val = int(raw)
            else:
                val = float(raw)
                if not math.isfinite(val):
                    raise ValueError(raw)
        except ValueError:
            raise BadValue(f"bad value {raw!r} for {key}", path, n) from None
        values[key] = (val, n)
    try:
        return AssocConfig(**{k: v for k, (v, _) in values.items()})
    except BadValue as exc:
        line = max((n for _, n in values.values()), default=None)
        raise BadValue(str(exc), path, line) from None


def write_config(config: AssocConfig, path):
    lines = [f"{f.name} = {getattr(config, f.name)}" for f in fields(AssocConfig)]
    atomic_write(path, "\n".join(lines) + "\n")


def load_frames(dets_path, masks_path=None, flow_dir=None, embeds_path=None,
                image_size=None, embed_dim=None):
    """Join the per-detection files into ordered ``FrameInput`` objects.

    Frames between the first and last detection frame are all emitted, empty
    or not, so flow indices stay aligned.
    """
    from .tracker import FrameInput

    frames = read_detections(dets_path)
    masks = read_masks(masks_path, image_size) if masks_path else {}
    if image_size is None and masks:
        m = next(iter(masks.values()))
        image_size = (m.width, m.height)
    embeds = read_embeddings(embeds_path, embed_dim) if embeds_path else {}
    if not frames:
        return []
    if image_size is None and flow_dir is not None:
        first = sorted(Path(flow_dir).glob("flow_*.flo"))
        if first:
            f = read_flow(first[0])
            image_size = (f.width, f.height)
    if image_size is None:
        image_size = (0, 0)
    out = []
    for t in range(min(frames), max(frames) + 1):
        dets = frames.get(t, [])
        for d in dets:
            d.mask = masks.get((t, d.det_id))
            d.embedding = embeds.get((t, d.det_id))
        flow = None
        if flow_dir is not None:
            p = Path(flow_dir) / FLOW_NAME.format(t - 1)
            if p.exists():
                flow = read_flow(p)
        out.append(FrameInput(t, tuple(image_size), dets, flow))
    return out
