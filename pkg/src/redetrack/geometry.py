"""Axis-aligned box arithmetic: IoU, area, shift and greedy NMS."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _core
from .errors import ContractError


@dataclass(frozen=True, slots=True)
class Box:
    """Rectangle given by its top-left corner and size, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ContractError(f"box corner must be finite, got ({self.x}, {self.y})")
        if not (self.w > 0 and self.h > 0) or not (math.isfinite(self.w) and math.isfinite(self.h)):
            raise ContractError(f"box size must be positive and finite, got {self.w}x{self.h}")

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "Box":
        if isinstance(a, np.ndarray):
            x, y, w, h = a.tolist()
            return cls(float(x), float(y), float(w), float(h))
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


def boxes_to_array(boxes: Sequence[Box]) -> np.ndarray:
    if len(boxes) == 0:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([(b.x, b.y, b.w, b.h) for b in boxes], dtype=np.float64)


def area(b: Box) -> float:
    return b.w * b.h


def iou(a: Box, b: Box) -> float:
    # same operation order as the compiled kernel so results agree bit for bit
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    # rounding can push nearly identical boxes a few ulps above 1
    return min(inter / (a.w * a.h + b.w * b.h - inter), 1.0)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (N, 4) and (M, 4) arrays of x, y, w, h rows."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ix = np.minimum(a[:, None, 0] + a[:, None, 2], b[None, :, 0] + b[None, :, 2]) - np.maximum(
        a[:, None, 0], b[None, :, 0]
    )
    iy = np.minimum(a[:, None, 1] + a[:, None, 3], b[None, :, 1] + b[None, :, 3]) - np.maximum(
        a[:, None, 1], b[None, :, 1]
    )
    ok = (ix > 0.0) & (iy > 0.0)
    inter = np.where(ok, ix * iy, 0.0)
    union = (a[:, None, 2] * a[:, None, 3] + b[None, :, 2] * b[None, :, 3]) - inter
    return np.where(ok, np.minimum(inter / union, 1.0), 0.0)


def iou_pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise IoU of two (N, 4) arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    if a.shape != b.shape:
        raise ContractError(f"iou_pairwise needs equal shapes, got {a.shape} and {b.shape}")
    ix = np.minimum(a[:, 0] + a[:, 2], b[:, 0] + b[:, 2]) - np.maximum(a[:, 0], b[:, 0])
    iy = np.minimum(a[:, 1] + a[:, 3], b[:, 1] + b[:, 3]) - np.maximum(a[:, 1], b[:, 1])
    ok = (ix > 0.0) & (iy > 0.0)
    inter = np.where(ok, ix * iy, 0.0)
    union = (a[:, 2] * a[:, 3] + b[:, 2] * b[:, 3]) - inter
    return np.where(ok, np.minimum(inter / np.where(ok, union, 1.0), 1.0), 0.0)


def shift(b: Box, d) -> Box:
    """Translate ``b`` by displacement ``d = (dx, dy)``; size is unchanged."""
    dx, dy = float(d[0]), float(d[1])
    if not (math.isfinite(dx) and math.isfinite(dy)):
        raise ContractError(f"displacement must be finite, got ({dx}, {dy})")
    return Box(b.x + dx, b.y + dy, b.w, b.h)


def clip_to_frame(b: Box, frame_w: float, frame_h: float) -> Box | None:
    """Intersection of ``b`` with the frame rectangle, or None if empty."""
    x0, y0 = max(b.x, 0.0), max(b.y, 0.0)
    x1, y1 = min(b.x + b.w, float(frame_w)), min(b.y + b.h, float(frame_h))
    if x1 <= x0 or y1 <= y0:
        return None
    return Box(x0, y0, x1 - x0, y1 - y0)


@dataclass(frozen=True)
class NMSResult:
    keep: list[int]
    # suppressed_by[i] is the kept index that removed box i, -1 for kept boxes
    suppressed_by: list[int]


def nms(boxes: Sequence[Box] | np.ndarray, scores: Sequence[float], threshold: float) -> NMSResult:
    """Greedy non-maximal suppression.

    Boxes are visited by descending score, equal scores by ascending index.
    A visited box is dropped when its IoU with an already kept box exceeds
    ``threshold``. ``keep`` lists kept indices in visiting order.
    """
    arr = boxes if isinstance(boxes, np.ndarray) else boxes_to_array(boxes)
    arr = np.asarray(arr, dtype=np.float64).reshape(-1, 4)
    sc = np.asarray(scores, dtype=np.float64).reshape(-1)
    if arr.shape[0] != sc.shape[0]:
        raise ContractError(f"nms got {arr.shape[0]} boxes but {sc.shape[0]} scores")
    if not 0.0 <= threshold <= 1.0:
        raise ContractError(f"nms threshold must lie in [0, 1], got {threshold}")
    n = arr.shape[0]
    if n == 0:
        return NMSResult([], [])
    order = np.lexsort((np.arange(n), -sc)).astype(np.int64)
    keep, by = _core.nms(arr, order, float(threshold))
    return NMSResult([int(i) for i in keep], [int(i) for i in by])
