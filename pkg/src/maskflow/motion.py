"""Constant-velocity Kalman filter over ``[cx, cy, s, r, vcx, vcy, vs]`` and
the velocity-direction consistency cost."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .core import BBox

_F = np.eye(7)
_F[0, 4] = _F[1, 5] = _F[2, 6] = 1.0
_H = np.eye(4, 7)

MIN_DIRECTION_NORM = 1e-6


@dataclass(frozen=True)
class KFParams:
    """Noise diagonals, SORT defaults."""

    init_var: Tuple[float, ...] = (10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4)
    process_var: Tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 1e-2, 1e-2, 1e-4)
    measure_var: Tuple[float, ...] = (1.0, 1.0, 10.0, 10.0)


DEFAULT_KF = KFParams()


@dataclass(frozen=True)
class KFState:
    mean: np.ndarray
    covariance: np.ndarray

    def box(self) -> BBox:
        return state_to_box(self.mean)


def box_to_measurement(box: BBox) -> np.ndarray:
    cx, cy = box.center()
    return np.array([cx, cy, box.w * box.h, box.w / box.h])


def state_to_box(mean) -> BBox:
    cx, cy, s, r = mean[:4]
    s = max(s, 1e-6)
    r = max(r, 1e-6)
    w = math.sqrt(s * r)
    h = s / w
    return BBox(cx - w / 2.0, cy - h / 2.0, w, h)


def kf_init(box: BBox, params: KFParams = DEFAULT_KF) -> KFState:
    mean = np.zeros(7)
    mean[:4] = box_to_measurement(box)
    return KFState(mean, np.diag(params.init_var).astype(float))


def kf_predict(state: KFState, params: KFParams = DEFAULT_KF) -> Tuple[KFState, BBox]:
    mean = state.mean.copy()
    if mean[2] + mean[6] <= 0:
        mean[6] = 0.0
    mean = _F @ mean
    cov = _F @ state.covariance @ _F.T + np.diag(params.process_var)
    cov = 0.5 * (cov + cov.T)
    new = KFState(mean, cov)
    return new, new.box()


def kf_update(state: KFState, obs: BBox, params: KFParams = DEFAULT_KF) -> KFState:
    z = box_to_measurement(obs)
    P = state.covariance
    S = _H @ P @ _H.T + np.diag(params.measure_var)
    K = np.linalg.solve(S, _H @ P).T
    mean = state.mean + K @ (z - _H @ state.mean)
    cov = (np.eye(7) - K @ _H) @ P
    cov = 0.5 * (cov + cov.T)
    # area and aspect must stay positive
    mean[2] = max(mean[2], 1e-6)
    mean[3] = max(mean[3], 1e-6)
    return KFState(mean, cov)


class ObservationHistory:
    """Bounded record of ``(frame, box)`` observations, oldest first."""

    def __init__(self, capacity: int):
        if capacity < 2:
            raise ValueError("history capacity must be at least 2")
        self._items = deque(maxlen=capacity)

    def push(self, frame: int, box: BBox):
        if self._items and frame <= self._items[-1][0]:
            raise ValueError(f"observation frame {frame} not after {self._items[-1][0]}")
        self._items.append((frame, box))

    def __len__(self):
        return len(self._items)

    def __getitem__(self, idx):
        return self._items[idx]

    def last(self):
        return self._items[-1]

    def boxes(self):
        return [b for _, b in self._items]


def ocm_cost(history: ObservationHistory, det: BBox, delta_t: int) -> float:
    """Angle between the track's recent heading and the heading towards ``det``,
    scaled to ``[0, 1]``. Neutral (0) when either direction is undefined."""
    if len(history) < 2:
        return 0.0
    back = min(delta_t, len(history) - 1)
    _, old = history[-1 - back]
    _, new = history[-1]
    ox, oy = old.center()
    nx, ny = new.center()
    dx, dy = det.center()
    a = np.array([nx - ox, ny - oy])
    b = np.array([dx - ox, dy - oy])
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < MIN_DIRECTION_NORM or nb < MIN_DIRECTION_NORM:
        return 0.0
    cos = float(np.clip(a @ b / (na * nb), -1.0, 1.0))
    return math.acos(cos) / math.pi
