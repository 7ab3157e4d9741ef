"""Online tracklet generation by redetection.

Each step predicts where every active tracklet's object moved, reads the
detector's answer at the anchors closest to that prediction, and either
extends or terminates the tracklet. Overlapping redetections are merged,
and fresh detections not already covered by a tracked box start new
tracklets.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .anchors import AnchorGrid, aggregate_redetection, assign_tracking_anchors_batch
from .detector import DetectorBackend
from .errors import ConfigError, ContractError, DegenerateInputError, SequencingError
from .geometry import Box, boxes_to_array, iou_matrix, nms
from .motion import FlowProvider, predict_flow

log = logging.getLogger(__name__)

ACTIVE = "active"
TERMINATED = "terminated"


@dataclass(frozen=True)
class GeneratorConfig:
    sigma_det: float = 0.9
    sigma_active: float = 0.4
    nms_redetect: float = 0.6
    merge_iou: float = 0.3
    K: int = 1
    strategy: str = "single"

    def validate(self) -> None:
        for name in ("sigma_det", "sigma_active", "nms_redetect", "merge_iou"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"generator.{name} must lie in [0, 1], got {v}")
        if self.K < 1:
            raise ConfigError(f"generator.K must be >= 1, got {self.K}")
        if self.strategy not in ("single", "multi"):
            raise ConfigError(f"generator.strategy must be 'single' or 'multi', got {self.strategy!r}")
        if self.sigma_det < self.sigma_active:
            log.warning("sigma_det %.3f is below sigma_active %.3f", self.sigma_det, self.sigma_active)

    @property
    def anchors_per_tracklet(self) -> int:
        return 1 if self.strategy == "single" else self.K


@dataclass
class Tracklet:
    id: int
    birth_frame: int
    boxes: list[Box] = field(default_factory=list)
    confidences: list[float] = field(default_factory=list)
    state: str = ACTIVE

    @property
    def last_frame(self) -> int:
        return self.birth_frame + len(self.boxes) - 1

    @property
    def last_box(self) -> Box:
        return self.boxes[-1]

    def frames(self) -> range:
        return range(self.birth_frame, self.last_frame + 1)

    def extend(self, frame_id: int, box: Box, confidence: float) -> None:
        if self.state != ACTIVE:
            raise ContractError(f"tracklet {self.id} is terminated and cannot be extended")
        if frame_id != self.last_frame + 1:
            raise ContractError(f"tracklet {self.id} ends at {self.last_frame}, cannot extend to {frame_id}")
        self.boxes.append(box)
        self.confidences.append(confidence)

    def terminate(self) -> None:
        self.state = TERMINATED


@dataclass
class FrameResult:
    frame_id: int
    extended: list[tuple[int, Box, float]] = field(default_factory=list)
    terminated: list[int] = field(default_factory=list)
    born: list[tuple[int, Box, float]] = field(default_factory=list)
    # tracklets whose anchors came from the nearest-center fallback
    fallback: list[int] = field(default_factory=list)
    queries: int = 0


class TrackletGenerator:
    def __init__(self, backend: DetectorBackend, grid: AnchorGrid, cfg: GeneratorConfig | None = None,
                 motion: FlowProvider | None = None):
        self.backend = backend
        self.grid = grid
        self.cfg = cfg or GeneratorConfig()
        self.cfg.validate()
        self.motion = motion
        self.tracklets: dict[int, Tracklet] = {}
        self._active: list[int] = []
        self._next_id = 1
        self._frame: int | None = None
        self.last_query_count = 0

    @property
    def frame_id(self) -> int | None:
        return self._frame

    def active(self) -> list[Tracklet]:
        return [self.tracklets[i] for i in self._active]

    def _spawn(self, frame_id: int, box: Box, conf: float) -> int:
        tid = self._next_id
        self._next_id += 1
        self.tracklets[tid] = Tracklet(tid, frame_id, [box], [conf])
        self._active.append(tid)
        return tid

    def init(self, frame_id: int = 1) -> FrameResult:
        if self._frame is not None:
            raise SequencingError("generator already initialised")
        res = FrameResult(frame_id)
        for box, conf in self.backend.detect(frame_id, self.cfg.sigma_det):
            res.born.append((self._spawn(frame_id, box, conf), box, conf))
        self._frame = frame_id
        self.last_query_count = 0
        return res

    def _predict(self, frame_id: int, boxes: list[Box]) -> list[Box]:
        if self.motion is None or not boxes:
            return boxes
        fld = self.motion.flow(frame_id)
        out = []
        for b in boxes:
            try:
                out.append(predict_flow(b, fld))
            except DegenerateInputError:
                out.append(b)
        return out

    def step(self, frame_id: int) -> FrameResult:
        if self._frame is None:
            raise SequencingError("call init() before step()")
        if frame_id != self._frame + 1:
            raise SequencingError(f"expected frame {self._frame + 1}, got {frame_id}")
        cfg = self.cfg
        res = FrameResult(frame_id)
        entry = list(self._active)
        tracks = [self.tracklets[i] for i in entry]

        predicted = self._predict(frame_id, [t.last_box for t in tracks])
        sets = assign_tracking_anchors_batch(self.grid, predicted, cfg.K, cfg.strategy)
        flat = [a for s in sets for a in s.anchor_ids]
        outputs = self.backend.query(frame_id, flat) if flat else []
        res.queries = len(flat)
        self.last_query_count = len(flat)

        # redetect; below sigma_active the tracklet ends here
        cand_ids, cand_boxes, cand_conf = [], [], []
        pos = 0
        for t, s in zip(tracks, sets):
            n = len(s.anchor_ids)
            lookup = {o.anchor_id: o for o in outputs[pos:pos + n]}
            pos += n
            if s.fallback:
                res.fallback.append(t.id)
            box, conf = aggregate_redetection(s, lookup)
            if conf >= cfg.sigma_active:
                cand_ids.append(t.id)
                cand_boxes.append(box)
                cand_conf.append(conf)
            else:
                res.terminated.append(t.id)

        # merge overlapping tracklets: the lower-confidence one is terminated
        keep = nms(cand_boxes, cand_conf, cfg.nms_redetect).keep if cand_ids else []
        kept = set(keep)
        for k, tid in enumerate(cand_ids):
            if k not in kept:
                res.terminated.append(tid)
        for k in sorted(kept):
            tid = cand_ids[k]
            self.tracklets[tid].extend(frame_id, cand_boxes[k], cand_conf[k])
            res.extended.append((tid, cand_boxes[k], cand_conf[k]))
        for tid in res.terminated:
            self.tracklets[tid].terminate()
        res.terminated.sort()
        self._active = [tid for tid, _, _ in res.extended]

        # fresh detections overlapping a tracked box are duplicates
        dets = self.backend.detect(frame_id, cfg.sigma_det)
        if dets:
            if res.extended:
                ov = iou_matrix(boxes_to_array([b for b, _ in dets]), boxes_to_array([b for _, b, _ in res.extended]))
                free = ~np.any(ov > cfg.merge_iou, axis=1)
            else:
                free = np.ones(len(dets), dtype=bool)
            for (box, conf), ok in zip(dets, free):
                if ok:
                    res.born.append((self._spawn(frame_id, box, conf), box, conf))
        self._frame = frame_id
        return res

    def backend_query_count(self) -> int:
        """Anchors queried during the most recent step."""
        return self.last_query_count
