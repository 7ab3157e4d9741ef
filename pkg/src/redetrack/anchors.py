"""Anchor grid, tracking-anchor assignment and redetection aggregation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import _core
from .errors import ConfigError, ContractError
from .geometry import Box, boxes_to_array


@dataclass(frozen=True)
class LevelConfig:
    stride: float
    feature_w: int
    feature_h: int
    scales: tuple[float, ...]
    aspect_ratios: tuple[float, ...] = (1.0,)


@dataclass(frozen=True)
class GridConfig:
    """Anchor layout.

    Either give explicit ``levels`` or let them be derived from ``strides``:
    level ``i`` then gets ``scales_per_octave`` scales starting at
    ``base_scale * stride`` and spaced by ``2 ** (1 / scales_per_octave)``,
    with a feature map covering the frame (``ceil(frame / stride)`` cells).
    """

    frame_w: int = 640
    frame_h: int = 480
    strides: tuple[float, ...] = (4.0, 8.0, 16.0, 32.0)
    base_scale: float = 8.0
    scales_per_octave: int = 3
    aspect_ratios: tuple[float, ...] = (1.0,)
    levels: tuple[LevelConfig, ...] | None = None

    def resolved_levels(self) -> tuple[LevelConfig, ...]:
        if self.levels is not None:
            return tuple(self.levels)
        if self.scales_per_octave < 1:
            raise ConfigError("grid.scales_per_octave must be >= 1")
        out = []
        for s in self.strides:
            if not s > 0:
                raise ConfigError(f"grid stride must be positive, got {s}")
            scales = tuple(
                self.base_scale * s * 2.0 ** (i / self.scales_per_octave) for i in range(self.scales_per_octave)
            )
            out.append(
                LevelConfig(
                    stride=float(s),
                    feature_w=math.ceil(self.frame_w / s),
                    feature_h=math.ceil(self.frame_h / s),
                    scales=scales,
                    aspect_ratios=tuple(self.aspect_ratios),
                )
            )
        return tuple(out)


def anchor_shape(scale: float, ratio: float) -> tuple[float, float]:
    """Width and height of an anchor; ``ratio`` is w/h and area stays ``scale**2``."""
    r = math.sqrt(ratio)
    return scale * r, scale / r


@dataclass(frozen=True, eq=False)
class AnchorGrid:
    frame_w: int
    frame_h: int
    levels: tuple[LevelConfig, ...]
    # flat (A, 4) prior boxes, rows indexed by anchor id
    boxes: np.ndarray
    # kernel-facing layout
    strides: np.ndarray
    fws: np.ndarray
    fhs: np.ndarray
    offsets: np.ndarray
    shape_ptr: np.ndarray
    shapes: np.ndarray
    maxw: np.ndarray
    maxh: np.ndarray

    def __len__(self) -> int:
        return self.boxes.shape[0]

    @property
    def size(self) -> int:
        return self.boxes.shape[0]

    def anchor_box(self, anchor_id: int) -> Box:
        return Box.from_array(self.boxes[anchor_id])

    def locate(self, anchor_id: int) -> tuple[int, int, int, int]:
        """Map an anchor id to (level, row, col, shape index)."""
        if not 0 <= anchor_id < self.size:
            raise ContractError(f"anchor id {anchor_id} outside grid of {self.size}")
        lv = int(np.searchsorted(self.offsets, anchor_id, side="right") - 1)
        ns = int(self.shape_ptr[lv + 1] - self.shape_ptr[lv])
        rel = anchor_id - int(self.offsets[lv])
        cell, s = divmod(rel, ns)
        row, col = divmod(cell, int(self.fws[lv]))
        return lv, row, col, s

    def index_of(self, level: int, row: int, col: int, shape: int) -> int:
        ns = int(self.shape_ptr[level + 1] - self.shape_ptr[level])
        return int(self.offsets[level]) + (row * int(self.fws[level]) + col) * ns + shape


def build_grid(config: GridConfig | Sequence[LevelConfig], frame_w: int | None = None, frame_h: int | None = None) -> AnchorGrid:
    if isinstance(config, GridConfig):
        levels = config.resolved_levels()
        fw_, fh_ = config.frame_w, config.frame_h
    else:
        levels = tuple(config)
        fw_, fh_ = frame_w, frame_h
    if fw_ is None or fh_ is None or fw_ <= 0 or fh_ <= 0:
        raise ConfigError(f"grid needs positive frame dimensions, got {fw_}x{fh_}")
    if not levels:
        raise ConfigError("anchor grid needs at least one level")

    strides, fws, fhs, offsets, ptr, shapes, maxw, maxh, blocks = [], [], [], [], [0], [], [], [], []
    total = 0
    for lv in levels:
        if not lv.stride > 0:
            raise ConfigError(f"grid stride must be positive, got {lv.stride}")
        if lv.feature_w < 1 or lv.feature_h < 1:
            raise ConfigError("feature map dimensions must be >= 1")
        if not lv.scales or any(not s > 0 for s in lv.scales):
            raise ConfigError("each level needs positive scales")
        if not lv.aspect_ratios or any(not r > 0 for r in lv.aspect_ratios):
            raise ConfigError("each level needs positive aspect ratios")
        lshapes = [anchor_shape(s, r) for s in lv.scales for r in lv.aspect_ratios]
        shapes.extend(lshapes)
        ptr.append(len(shapes))
        ls = np.array(lshapes)
        strides.append(float(lv.stride))
        fws.append(lv.feature_w)
        fhs.append(lv.feature_h)
        offsets.append(total)
        maxw.append(float(ls[:, 0].max()))
        maxh.append(float(ls[:, 1].max()))

        rows, cols, ss = np.meshgrid(
            np.arange(lv.feature_h), np.arange(lv.feature_w), np.arange(len(lshapes)), indexing="ij"
        )
        cx = (cols.ravel() + 0.5) * lv.stride
        cy = (rows.ravel() + 0.5) * lv.stride
        aw = ls[ss.ravel(), 0]
        ah = ls[ss.ravel(), 1]
        blocks.append(np.stack([cx - aw / 2.0, cy - ah / 2.0, aw, ah], axis=1))
        total += lv.feature_w * lv.feature_h * len(lshapes)

    return AnchorGrid(
        frame_w=int(fw_),
        frame_h=int(fh_),
        levels=levels,
        boxes=np.ascontiguousarray(np.concatenate(blocks, axis=0)),
        strides=np.array(strides, dtype=np.float64),
        fws=np.array(fws, dtype=np.int64),
        fhs=np.array(fhs, dtype=np.int64),
        offsets=np.array(offsets, dtype=np.int64),
        shape_ptr=np.array(ptr, dtype=np.int64),
        shapes=np.ascontiguousarray(np.array(shapes, dtype=np.float64).reshape(-1, 2)),
        maxw=np.array(maxw, dtype=np.float64),
        maxh=np.array(maxh, dtype=np.float64),
    )


@dataclass(frozen=True)
class TrackingAnchorSet:
    anchor_ids: tuple[int, ...]
    weights: tuple[float, ...]
    # True when no anchor overlapped the prediction and the nearest one was used
    fallback: bool = False

    def __post_init__(self):
        n = len(self.anchor_ids)
        if n != len(self.weights) or not n:
            raise ContractError("tracking anchor set needs matching, non-empty ids and weights")
        if n == 1:
            if not self.weights[0] > 0:
                raise ContractError("tracking anchor weights must be >= 0 with at least one > 0")
            return
        if len(set(self.anchor_ids)) != n:
            raise ContractError("tracking anchor ids must be distinct")
        if any(w < 0 for w in self.weights) or not any(w > 0 for w in self.weights):
            raise ContractError("tracking anchor weights must be >= 0 with at least one > 0")

    def __len__(self) -> int:
        return len(self.anchor_ids)


def _query_array(b: Box) -> np.ndarray:
    return np.array([b.x, b.y, b.w, b.h], dtype=np.float64)


def topk_by_iou(grid: AnchorGrid, predicted: Box, k: int) -> tuple[np.ndarray, np.ndarray]:
    return _core.topk_anchors(
        _query_array(predicted), grid.strides, grid.fws, grid.fhs, grid.offsets,
        grid.shape_ptr, grid.shapes, grid.maxw, grid.maxh, int(k),
    )


def nearest_anchor(grid: AnchorGrid, predicted: Box) -> int:
    """Anchor whose center is closest to the predicted center; ties to lower id."""
    a = grid.boxes
    d2 = (a[:, 0] + a[:, 2] / 2.0 - predicted.cx) ** 2 + (a[:, 1] + a[:, 3] / 2.0 - predicted.cy) ** 2
    return int(np.argmin(d2))


def assign_tracking_anchors(grid: AnchorGrid, predicted: Box, K: int = 1, strategy: str = "single") -> TrackingAnchorSet:
    return assign_tracking_anchors_batch(grid, [predicted], K, strategy)[0]


def assign_tracking_anchors_batch(grid: AnchorGrid, predicted: Sequence[Box], K: int = 1,
                                  strategy: str = "single") -> list[TrackingAnchorSet]:
    """Tracking anchors for several predicted boxes with one kernel call."""
    if K < 1:
        raise ContractError(f"K must be >= 1, got {K}")
    if strategy not in ("single", "multi"):
        raise ContractError(f"unknown assignment strategy {strategy!r}")
    if len(predicted) == 0:
        return []
    k = 1 if strategy == "single" else K
    q = np.ascontiguousarray(boxes_to_array(predicted))
    ids, ious, counts = _core.topk_anchors_batch(
        q, grid.strides, grid.fws, grid.fhs, grid.offsets, grid.shape_ptr, grid.shapes, grid.maxw, grid.maxh, k,
    )
    out = []
    for i, b in enumerate(predicted):
        n = int(counts[i])
        if n == 0:
            out.append(TrackingAnchorSet((nearest_anchor(grid, b),), (1.0,), fallback=True))
        elif strategy == "single":
            out.append(TrackingAnchorSet((int(ids[i, 0]),), (1.0,)))
        else:
            out.append(TrackingAnchorSet(tuple(ids[i, :n].tolist()), tuple(ious[i, :n].tolist())))
    return out


@dataclass(frozen=True)
class AnchorOutput:
    anchor_id: int
    confidence: float
    box: Box

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ContractError(f"anchor confidence must lie in [0, 1], got {self.confidence}")


def aggregate_redetection(anchor_set: TrackingAnchorSet, outputs: Mapping[int, AnchorOutput]) -> tuple[Box, float]:
    """Weighted mean of the tracking anchors' boxes and confidences.

    Sums are exactly rounded (``math.fsum``) so the result does not depend
    on entry order, and each coordinate is clamped into the range spanned by
    the contributing boxes.
    """
    rows = []
    for aid, w in zip(anchor_set.anchor_ids, anchor_set.weights):
        out = outputs.get(aid)
        if out is None:
            raise ContractError(f"no detector output for tracking anchor {aid}")
        rows.append((w, out.box.x, out.box.y, out.box.w, out.box.h, out.confidence))
    if len(rows) == 1:
        out = outputs[anchor_set.anchor_ids[0]]
        return out.box, out.confidence
    sw = math.fsum(r[0] for r in rows)
    if not sw > 0:
        raise ContractError("tracking anchor weights sum to zero")
    vals = []
    for j in range(1, 6):
        col = [r[j] for r in rows]
        m = math.fsum(r[0] * r[j] for r in rows) / sw
        vals.append(min(max(m, min(col)), max(col)))
    return Box(vals[0], vals[1], vals[2], vals[3]), vals[4]
