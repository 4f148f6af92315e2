"""Mask- and flow-aware multi-object association engine."""

from .core import AssocConfig, BBox, Detection, FlowField, Mask, iou, mask_centroid, mask_pixels
from .tracker import FrameInput, Tracker, run_sequence

__all__ = [
    "AssocConfig", "BBox", "Detection", "FlowField", "FrameInput", "Mask", "Tracker",
    "iou", "mask_centroid", "mask_pixels", "run_sequence",
]
__version__ = "0.1.0"
