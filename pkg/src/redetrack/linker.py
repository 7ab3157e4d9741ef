"""Online linking of tracklets into long-term tracks by appearance.

Every track keeps one bank embedding, the renormalised running mean of the
embeddings observed for it. A track is *linked* while one of its tracklets
is alive and *awaiting* otherwise; only awaiting tracks can take a newly
born tracklet.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _core
from .errors import ConfigError, ContractError
from .geometry import Box, boxes_to_array, iou_matrix
from .matching import Assignment, hungarian

LINKED = "linked-active"
AWAITING = "awaiting"

__all__ = ["hungarian", "Assignment", "LinkConfig", "Track", "Linker", "normalize", "EmbeddingProvider"]


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ContractError("embedding has non-finite values")
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ContractError("cannot normalise a zero embedding")
    # already unit length up to rounding: keep the exact values
    if abs(n - 1.0) < 1e-12:
        return v
    return v / n


@dataclass(frozen=True)
class LinkConfig:
    enabled: bool = True
    distance_threshold: float = 0.97
    # frames between embedding refreshes of a live tracklet; 0 disables
    embedding_cadence: int = 10

    def validate(self) -> None:
        if not self.distance_threshold > 0:
            raise ConfigError(f"linker.distance_threshold must be > 0, got {self.distance_threshold}")
        if self.embedding_cadence < 0:
            raise ConfigError("linker.embedding_cadence must be >= 0")


@dataclass
class Track:
    id: int
    mean: np.ndarray
    sample_count: int = 1
    state: str = LINKED
    member_tracklets: list[int] = field(default_factory=list)

    @property
    def bank_embedding(self) -> np.ndarray:
        return normalize(self.mean)

    def add_sample(self, e: np.ndarray) -> None:
        self.sample_count += 1
        self.mean = self.mean + (e - self.mean) / self.sample_count


class Linker:
    def __init__(self, cfg: LinkConfig | None = None):
        self.cfg = cfg or LinkConfig()
        self.cfg.validate()
        self.tracks: dict[int, Track] = {}
        self.track_of: dict[int, int] = {}
        self._live: dict[int, int] = {}  # track id -> its live tracklet
        self._next_id = 1

    def awaiting(self) -> list[Track]:
        return [t for t in self.tracks.values() if t.state == AWAITING]

    def observe(self, new_tracklets: Sequence[tuple[int, np.ndarray]], frame_id: int) -> dict[int, int]:
        """Attach each newly born tracklet to an awaiting track or a new one."""
        ids = [tid for tid, _ in new_tracklets]
        if len(set(ids)) != len(ids):
            raise ContractError("duplicate tracklet id in one observe call")
        for tid in ids:
            if tid in self.track_of:
                raise ContractError(f"tracklet {tid} is already linked")
        embs = [normalize(e) for _, e in new_tracklets]
        waiting = sorted(self.awaiting(), key=lambda t: t.id)
        result: dict[int, int] = {}
        matched: dict[int, Track] = {}
        if embs and waiting:
            E = np.stack(embs)
            B = np.stack([t.bank_embedding for t in waiting])
            dist = np.linalg.norm(E[:, None, :] - B[None, :, :], axis=2)
            a = hungarian(dist, forbidden=dist > self.cfg.distance_threshold)
            matched = {r: waiting[c] for r, c in a.pairs}
        for r, (tid, _) in enumerate(new_tracklets):
            e = embs[r]
            tr = matched.get(r)
            if tr is None:
                tr = Track(self._next_id, e.copy())
                self._next_id += 1
                self.tracks[tr.id] = tr
            else:
                tr.add_sample(e)
                tr.state = LINKED
            tr.member_tracklets.append(tid)
            self.track_of[tid] = tr.id
            self._live[tr.id] = tid
            result[tid] = tr.id
        return result

    def on_tracklet_terminated(self, tracklet_id: int, frame_id: int) -> None:
        tr_id = self.track_of.get(tracklet_id)
        if tr_id is None:
            raise ContractError(f"unknown tracklet {tracklet_id}")
        tr = self.tracks[tr_id]
        if tr.state != LINKED or self._live.get(tr_id) != tracklet_id:
            return
        tr.state = AWAITING
        del self._live[tr_id]

    def refresh(self, tracklet_id: int, embedding) -> None:
        """Fold a re-extracted embedding of a live tracklet into its track's bank."""
        tr_id = self.track_of.get(tracklet_id)
        if tr_id is None:
            raise ContractError(f"unknown tracklet {tracklet_id}")
        self.tracks[tr_id].add_sample(normalize(embedding))


_RANDOM_STREAM = 201


class EmbeddingProvider:
    """Appearance embeddings for boxes.

    ``lookup(frame, key)`` returns a stored vector or None. With a
    ground-truth ``scene`` the key is the identity overlapping the box most
    (the stand-in for cropping the image and running an embedding network);
    without one the key is the tracklet id. Boxes that resolve to nothing get
    a reproducible random unit vector.
    """

    def __init__(self, lookup: Callable[[int, int], np.ndarray | None], scene=None, dim: int = 128, seed: int = 0):
        self.lookup = lookup
        self.scene = scene
        self.dim = dim
        self.seed = seed

    def resolve_many(self, frame_id: int, boxes: Sequence[Box], tracklet_ids: Sequence[int]) -> list[int | None]:
        if self.scene is None:
            return list(tracklet_ids)
        vis = np.nonzero(self.scene.visible(frame_id))[0]
        if vis.size == 0 or not boxes:
            return [None] * len(boxes)
        ov = iou_matrix(boxes_to_array(boxes), self.scene.boxes[frame_id - 1, vis])
        best = np.argmax(ov, axis=1)
        return [int(self.scene.ids[vis[k]]) if ov[r, k] > 0 else None for r, k in enumerate(best)]

    def resolve(self, frame_id: int, box: Box, tracklet_id: int) -> int | None:
        return self.resolve_many(frame_id, [box], [tracklet_id])[0]

    def _vector(self, frame_id: int, key: int | None, tracklet_id: int) -> np.ndarray:
        v = self.lookup(frame_id, key) if key is not None else None
        if v is None:
            z = _core.keyed_normals(self.seed, _RANDOM_STREAM, frame_id, np.full(self.dim, tracklet_id, dtype=np.int64),
                                    np.arange(self.dim, dtype=np.int64), 1)[:, 0]
            return normalize(z)
        return normalize(v)

    def embed(self, frame_id: int, box: Box, tracklet_id: int) -> np.ndarray:
        return self.embed_many(frame_id, [box], [tracklet_id])[0]

    def embed_many(self, frame_id: int, boxes: Sequence[Box], tracklet_ids: Sequence[int]) -> list[np.ndarray]:
        keys = self.resolve_many(frame_id, boxes, tracklet_ids)
        return [self._vector(frame_id, k, t) for k, t in zip(keys, tracklet_ids)]

    @classmethod
    def from_scene(cls, scene) -> "EmbeddingProvider":
        def lookup(frame_id, identity):
            try:
                return scene.embedding(identity, frame_id)
            except KeyError:
                return None

        return cls(lookup, scene, dim=scene.base_embeddings.shape[1] if scene.base_embeddings.size else 128, seed=scene.seed)

    @classmethod
    def from_table(cls, table: dict[tuple[int, int], np.ndarray], scene=None) -> "EmbeddingProvider":
        dim = len(next(iter(table.values()))) if table else 128
        return cls(lambda f, k: table.get((f, k)), scene, dim=dim)
