"""Detector backends standing in for a single-shot network.

A backend answers two questions about a frame: what the given anchors
predict (``query``), and which objects the frame contains (``detect``).
The synthetic backend derives both from a ground-truth scene; the replay
backend reads them from a recorded text file.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from . import _core
from .anchors import AnchorGrid, AnchorOutput
from .errors import ConfigError, FrameRangeError, ParseError
from .geometry import Box, iou_pairwise, nms
from .simulator import GroundTruthScene

_QUERY_STREAM = 11
_DETECT_STREAM = 12
_DROP_STREAM = 13
_MIN_SIDE = 1.0


class DetectorBackend(Protocol):
    def query(self, frame_id: int, anchor_ids: Sequence[int]) -> list[AnchorOutput]:
        """Outputs of the given anchors on ``frame_id``, in request order."""
        ...

    def detect(self, frame_id: int, sigma_det: float) -> list[tuple[Box, float]]: ...


@dataclass(frozen=True)
class SyntheticOracleConfig:
    response_iou_floor: float = 0.3
    regression_noise_sigma: float = 0.0
    # base confidence: "iou" uses the anchor's IoU with the object, "constant" a fixed value
    confidence_kind: str = "iou"
    confidence_constant: float = 1.0
    confidence_noise_sigma: float = 0.02
    dropout_prob: float = 0.0
    detect_nms: float = 0.45
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.response_iou_floor <= 1.0:
            raise ConfigError(f"oracle.response_iou_floor must lie in [0, 1], got {self.response_iou_floor}")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ConfigError(f"oracle.dropout_prob must lie in [0, 1], got {self.dropout_prob}")
        if self.regression_noise_sigma < 0 or self.confidence_noise_sigma < 0:
            raise ConfigError("oracle noise sigmas must be >= 0")
        if self.confidence_kind not in ("iou", "constant"):
            raise ConfigError(f"oracle.confidence_kind must be 'iou' or 'constant', got {self.confidence_kind!r}")
        if not 0.0 <= self.detect_nms <= 1.0:
            raise ConfigError("oracle.detect_nms must lie in [0, 1]")


class SyntheticBackend:
    """Ground-truth driven stand-in for the detector network.

    Each frame gets one dense pass over the whole anchor grid (like the
    network's forward pass): every anchor is tied to the visible object it
    overlaps most, if that IoU reaches ``response_iou_floor``. Queries then
    read anchors out of that pass. Noise is drawn from a counter-based
    generator keyed on (frame, object, anchor), so answers do not depend on
    query order.
    """

    def __init__(self, scene: GroundTruthScene, grid: AnchorGrid, cfg: SyntheticOracleConfig | None = None):
        self.scene = scene
        self.grid = grid
        self.cfg = cfg or SyntheticOracleConfig()
        self.cfg.validate()
        self._owner = np.empty(grid.size, dtype=np.int64)
        self._best = np.empty(grid.size, dtype=np.float64)
        # dense head output: noiseless base confidence and decoded box of every anchor
        self._conf = np.empty(grid.size, dtype=np.float64)
        self._boxes = np.empty((grid.size, 4), dtype=np.float64)
        self._frame = None
        self._obj_ids = np.zeros(0, dtype=np.int64)
        self._obj_boxes = np.zeros((0, 4))
        self.anchors_queried = 0
        self.forward_passes = 0

    def dropped(self, frame_id: int, identity: int) -> bool:
        p = self.cfg.dropout_prob
        if p <= 0.0:
            return False
        if p >= 1.0:
            return True
        return _core.keyed_uniform(self.cfg.seed, _DROP_STREAM, frame_id, identity, 0, 0) < p

    def _detectable(self, frame_id: int) -> np.ndarray:
        vis = self.scene.visible(frame_id)
        idx = np.nonzero(vis)[0]
        return np.array([i for i in idx if not self.dropped(frame_id, int(self.scene.ids[i]))], dtype=np.int64)

    def forward(self, frame_id: int) -> None:
        if self._frame == frame_id:
            return
        if not 1 <= frame_id <= self.scene.frames:
            raise FrameRangeError(f"frame {frame_id} outside 1..{self.scene.frames}")
        idx = self._detectable(frame_id)
        self._obj_ids = self.scene.ids[idx].astype(np.int64)
        self._obj_boxes = np.ascontiguousarray(self.scene.boxes[frame_id - 1, idx].reshape(-1, 4))
        g = self.grid
        _core.paint_responses(
            self._obj_boxes, g.strides, g.fws, g.fhs, g.offsets, g.shape_ptr, g.shapes, g.maxw, g.maxh,
            float(self.cfg.response_iou_floor), self._owner, self._best,
        )
        _core.fill_dense(self._owner, self._best, self._obj_boxes, g.boxes, int(self.cfg.confidence_kind == "constant"),
                         float(self.cfg.confidence_constant), self._conf, self._boxes)
        self._frame = frame_id
        self.forward_passes += 1

    def _confidence(self, base_iou: np.ndarray, eps: np.ndarray) -> np.ndarray:
        base = base_iou if self.cfg.confidence_kind == "iou" else np.full_like(base_iou, self.cfg.confidence_constant)
        return np.clip(base + self.cfg.confidence_noise_sigma * eps, 0.0, 1.0)

    def query(self, frame_id: int, anchor_ids: Sequence[int]) -> list[AnchorOutput]:
        """Read the queried anchors out of the frame's dense output, adding keyed noise to responders."""
        self.forward(frame_id)
        ids = np.asarray(anchor_ids, dtype=np.int64).reshape(-1)
        self.anchors_queried += ids.shape[0]
        owner = self._owner[ids]
        boxes = self._boxes[ids]
        conf = np.zeros(ids.shape[0])
        hit = np.nonzero(owner >= 0)[0]
        if hit.size:
            hid = ids[hit]
            noise = _core.keyed_normals(self.cfg.seed, _QUERY_STREAM, frame_id, self._obj_ids[owner[hit]], hid, 5)
            hb = boxes[hit] + self.cfg.regression_noise_sigma * noise[:, :4]
            hb[:, 2:] = np.maximum(hb[:, 2:], _MIN_SIDE)
            boxes[hit] = hb
            conf[hit] = np.clip(self._conf[hid] + self.cfg.confidence_noise_sigma * noise[:, 4], 0.0, 1.0)
        return [AnchorOutput(a, c, Box(*b)) for a, c, b in zip(ids.tolist(), conf.tolist(), boxes.tolist())]

    def detect(self, frame_id: int, sigma_det: float) -> list[tuple[Box, float]]:
        self.forward(frame_id)
        n = self._obj_ids.shape[0]
        if n == 0:
            return []
        noise = _core.keyed_normals(self.cfg.seed, _DETECT_STREAM, frame_id, self._obj_ids, np.full(n, -1), 5)
        boxes = self._obj_boxes + self.cfg.regression_noise_sigma * noise[:, :4]
        boxes[:, 2:] = np.maximum(boxes[:, 2:], _MIN_SIDE)
        fit = iou_pairwise(boxes, self._obj_boxes)
        conf = self._confidence(fit, noise[:, 4])
        cand = np.nonzero(conf >= sigma_det)[0]
        if cand.size == 0:
            return []
        kept = nms(boxes[cand], conf[cand], self.cfg.detect_nms).keep
        return [(Box.from_array(boxes[cand[k]]), float(conf[cand[k]])) for k in kept]


def _fmt(v: float) -> str:
    return repr(float(v))


class RecordingBackend:
    """Wraps a backend and logs every answer in the replay format."""

    def __init__(self, inner: DetectorBackend):
        self.inner = inner
        self._queries: dict[tuple[int, int], AnchorOutput] = {}
        self._detections: dict[int, list[tuple[Box, float]]] = {}

    def query(self, frame_id, anchor_ids):
        outs = self.inner.query(frame_id, anchor_ids)
        for o in outs:
            self._queries[(frame_id, o.anchor_id)] = o
        return outs

    def detect(self, frame_id, sigma_det):
        dets = self.inner.detect(frame_id, sigma_det)
        self._detections[frame_id] = list(dets)
        return dets

    def lines(self) -> list[str]:
        out = ["# replay: Q,frame,anchor_id,conf,x,y,w,h | D,frame,conf,x,y,w,h"]
        frames = sorted({f for f, _ in self._queries} | set(self._detections))
        for f in frames:
            for (qf, a), o in sorted((k, v) for k, v in self._queries.items() if k[0] == f):
                b = o.box
                out.append(",".join(["Q", str(f), str(a), _fmt(o.confidence), _fmt(b.x), _fmt(b.y), _fmt(b.w), _fmt(b.h)]))
            for b, c in self._detections.get(f, []):
                out.append(",".join(["D", str(f), _fmt(c), _fmt(b.x), _fmt(b.y), _fmt(b.w), _fmt(b.h)]))
        return out

    def write(self, path) -> None:
        Path(path).write_text("\n".join(self.lines()) + "\n")


class ReplayBackend:
    """Backend answering from a recorded file. Unrecorded anchors answer confidence 0."""

    def __init__(self, queries: dict[tuple[int, int], AnchorOutput], detections: dict[int, list[tuple[Box, float]]],
                 grid: AnchorGrid | None = None):
        self._queries = queries
        self._detections = detections
        self.grid = grid
        self.anchors_queried = 0

    def query(self, frame_id, anchor_ids):
        out = []
        for a in anchor_ids:
            a = int(a)
            self.anchors_queried += 1
            o = self._queries.get((frame_id, a))
            if o is None:
                prior = self.grid.anchor_box(a) if self.grid is not None else Box(0.0, 0.0, 1.0, 1.0)
                o = AnchorOutput(a, 0.0, prior)
            out.append(o)
        return out

    def detect(self, frame_id, sigma_det):
        return [(b, c) for b, c in self._detections.get(frame_id, []) if c >= sigma_det]


def replay_backend(path, grid: AnchorGrid | None = None) -> ReplayBackend:
    queries: dict[tuple[int, int], AnchorOutput] = {}
    detections: dict[int, list[tuple[Box, float]]] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            try:
                if parts[0] == "Q":
                    if len(parts) != 8:
                        raise ValueError(f"Q row needs 8 fields, got {len(parts)}")
                    f, a = int(parts[1]), int(parts[2])
                    c, x, y, w, h = (float(p) for p in parts[3:])
                    queries[(f, a)] = AnchorOutput(a, c, Box(x, y, w, h))
                elif parts[0] == "D":
                    if len(parts) != 7:
                        raise ValueError(f"D row needs 7 fields, got {len(parts)}")
                    f = int(parts[1])
                    c, x, y, w, h = (float(p) for p in parts[2:])
                    if not 0.0 <= c <= 1.0:
                        raise ValueError(f"confidence {c} outside [0, 1]")
                    detections.setdefault(f, []).append((Box(x, y, w, h), c))
                else:
                    raise ValueError(f"unknown row kind {parts[0]!r}")
            except (ValueError, IndexError) as e:
                raise ParseError(str(e), path, lineno) from None
    return ReplayBackend(queries, detections, grid)
