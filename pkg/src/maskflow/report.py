"""Rendering: per-frame overlay images and metric figures."""

from __future__ import annotations

import hashlib
import json
from collections import defaultdict
from pathlib import Path

import numpy as np

from .dataio import atomic_write, read_masks, read_tracks

MASK_FILL = (90, 90, 90)
BACKGROUND = (16, 16, 16)

# 3x5 block digits, rows top to bottom
_DIGITS = {
    "0": ("111", "101", "101", "101", "111"),
    "1": ("010", "110", "010", "010", "111"),
    "2": ("111", "001", "111", "100", "111"),
    "3": ("111", "001", "111", "001", "111"),
    "4": ("101", "101", "111", "001", "001"),
    "5": ("111", "100", "111", "001", "111"),
    "6": ("111", "100", "111", "101", "111"),
    "7": ("111", "001", "010", "010", "010"),
    "8": ("111", "101", "111", "101", "111"),
    "9": ("111", "101", "111", "001", "111"),
}


def id_color(track_id: int):
    """Stable bright colour for a track id."""
    d = hashlib.md5(str(track_id).encode("ascii")).digest()
    return tuple(64 + b % 192 for b in d[:3])


def encode_ppm(img: np.ndarray) -> bytes:
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img, dtype=np.uint8).tobytes()


def decode_ppm(data: bytes) -> np.ndarray:
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


def _draw_rect(img, x, y, w, h, color, thickness=1):
    H, W, _ = img.shape
    x0, y0 = int(round(x)), int(round(y))
    x1, y1 = int(round(x + w)) - 1, int(round(y + h)) - 1
    for k in range(thickness):
        for (ya, yb, xa, xb) in ((y0 + k, y0 + k, x0, x1), (y1 - k, y1 - k, x0, x1),
                                 (y0, y1, x0 + k, x0 + k), (y0, y1, x1 - k, x1 - k)):
            ya, yb = max(ya, 0), min(yb, H - 1)
            xa, xb = max(xa, 0), min(xb, W - 1)
            if ya <= yb and xa <= xb:
                img[ya:yb + 1, xa:xb + 1] = color


def _draw_text(img, text, x, y, color, scale=1):
    H, W, _ = img.shape
    cx = x
    for ch in text:
        glyph = _DIGITS.get(ch)
        if glyph is None:
            cx += 4 * scale
            continue
        for r, row in enumerate(glyph):
            for c, bit in enumerate(row):
                if bit == "1":
                    ya, xa = y + r * scale, cx + c * scale
                    if 0 <= ya and ya + scale <= H and 0 <= xa and xa + scale <= W:
                        img[ya:ya + scale, xa:xa + scale] = color
        cx += 4 * scale


def render_frame(width, height, masks, records) -> np.ndarray:
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:] = BACKGROUND
    for m in masks:
        img[m.to_array()] = MASK_FILL
    for r in records:
        color = id_color(r.track_id)
        _draw_rect(img, r.box.x, r.box.y, r.box.w, r.box.h, color)
        ty = int(round(r.box.y)) - 7
        if ty < 0:
            ty = int(round(r.box.y)) + 2
        _draw_text(img, str(r.track_id), int(round(r.box.x)) + 1, ty, color)
    return img


def render_overlay(bundle_dir, tracks_path, out_dir):
    """Write ``frame_%06d.ppm`` for every frame of a scene bundle; returns paths."""
    bundle_dir = Path(bundle_dir)
    manifest = json.loads((bundle_dir / "scene.json").read_text())
    width, height = manifest["image_size"]
    n_frames = manifest["n_frames"]
    masks_by_frame = defaultdict(list)
    masks_file = bundle_dir / manifest["files"]["masks"]
    if masks_file.exists():
        for (frame, _), m in sorted(read_masks(masks_file, (width, height)).items()):
            masks_by_frame[frame].append(m)
    recs_by_frame = defaultdict(list)
    for r in read_tracks(tracks_path):
        recs_by_frame[r.frame].append(r)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in range(1, n_frames + 1):
        img = render_frame(width, height, masks_by_frame[t], recs_by_frame[t])
        p = out / f"frame_{t:06d}.ppm"
        atomic_write(p, encode_ppm(img), mode="wb")
        paths.append(p)
    return paths


def plot_metrics(reports, path, title=None):
    """Bar chart of MOTA/IDF1 and the error counts for one or more labelled
    reports (``{label: MetricsReport}``), saved to ``path``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = list(reports)
    x = np.arange(len(labels))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
    width = 0.38
    ax1.bar(x - width / 2, [reports[k].mota for k in labels], width, label="MOTA")
    ax1.bar(x + width / 2, [reports[k].idf1 for k in labels], width, label="IDF1")
    ax1.set_xticks(x)
    ax1.set_xticklabels(labels)
    ax1.set_ylim(min(0.0, min(reports[k].mota for k in labels)), 1.25)
    ax1.legend(frameon=False, fontsize=8, ncol=2, loc="upper center")
    ax1.set_ylabel("score")

    width = 0.26
    ax2.bar(x - width, [reports[k].id_switches for k in labels], width, label="IDSW")
    ax2.bar(x, [reports[k].false_positives for k in labels], width, label="FP")
    ax2.bar(x + width, [reports[k].false_negatives for k in labels], width, label="FN")
    ax2.set_xticks(x)
    ax2.set_xticklabels(labels)
    top = max(max(reports[k].id_switches, reports[k].false_positives,
                  reports[k].false_negatives) for k in labels)
    ax2.set_ylim(0, 1.25 * max(top, 1))
    ax2.legend(frameon=False, fontsize=8, ncol=3, loc="upper center")
    ax2.set_ylabel("count")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    # fixed metadata keeps the file byte-stable across runs
    suffix = Path(path).suffix.lower()
    meta = {"Software": None} if suffix == ".png" else None
    if suffix == ".svg":
        meta = {"Date": None}
        matplotlib.rcParams["svg.hashsalt"] = "maskflow"
    fig.savefig(path, dpi=100, metadata=meta)
    plt.close(fig)
    return Path(path)
