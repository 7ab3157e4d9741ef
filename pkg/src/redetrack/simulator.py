"""Synthetic ground-truth scenes for exercising the tracker end to end."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .errors import ConfigError, FrameRangeError
from .geometry import Box
from .motion import FlowField

_EMB_STREAM = 101
_TEX_STREAM = 102


@dataclass(frozen=True)
class SceneConfig:
    n_objects: int = 5
    frames: int = 100
    frame_w: int = 640
    frame_h: int = 480
    size_min: float = 32.0
    size_max: float = 80.0
    # height = width * aspect
    aspect_min: float = 1.0
    aspect_max: float = 1.0
    # per-frame speed in pixels; when rel_speed > 0 it overrides, as a fraction of box width
    speed_min: float = 0.0
    speed_max: float = 3.0
    rel_speed: float = 0.0
    jitter_sigma: float = 0.0
    jump_prob: float = 0.0
    jump_magnitude: float = 0.0
    # "free": whole frame shared; "cells": one private cell per object, so boxes never overlap
    layout: str = "cells"
    occlusion_prob: float = 0.0
    occlusion_min: int = 5
    occlusion_max: int = 15
    absence_prob: float = 0.0
    absence_min: int = 5
    absence_max: int = 15
    shot_changes: tuple[int, ...] = ()
    embedding_dim: int = 128
    embedding_noise: float = 0.02
    embedding_min_distance: float = 1.2
    seed: int = 0

    def validate(self) -> None:
        if self.frames < 1:
            raise ConfigError("scene.frames must be >= 1")
        if self.frame_w < 1 or self.frame_h < 1:
            raise ConfigError("scene.frame_w and scene.frame_h must be >= 1")
        if self.n_objects < 0:
            raise ConfigError("scene.n_objects must be >= 0")
        for name in ("jump_prob", "occlusion_prob", "absence_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"scene.{name} must lie in [0, 1], got {v}")
        if not 0 < self.size_min <= self.size_max:
            raise ConfigError("scene.size_min must be positive and <= size_max")
        if not 0 < self.aspect_min <= self.aspect_max:
            raise ConfigError("scene.aspect_min must be positive and <= aspect_max")
        if self.layout not in ("free", "cells"):
            raise ConfigError(f"scene.layout must be 'free' or 'cells', got {self.layout!r}")
        if self.embedding_dim < 1:
            raise ConfigError("scene.embedding_dim must be >= 1")
        if self.occlusion_min < 1 or self.occlusion_max < self.occlusion_min:
            raise ConfigError("scene.occlusion_min/max must satisfy 1 <= min <= max")
        if self.absence_min < 1 or self.absence_max < self.absence_min:
            raise ConfigError("scene.absence_min/max must satisfy 1 <= min <= max")


@dataclass(frozen=True)
class Event:
    frame: int
    kind: str  # occlusion | exit | entry | shot_change | jump
    identity: int = -1


@dataclass(eq=False)
class GroundTruthScene:
    """Per-frame boxes of every identity.

    Frames are numbered from 1. ``boxes[t - 1, i]`` is identity ``ids[i]``'s
    box on frame ``t`` (NaN when absent); ``visibility`` is 0 while occluded.
    """

    frames: int
    frame_w: int
    frame_h: int
    ids: np.ndarray
    boxes: np.ndarray
    visibility: np.ndarray
    base_embeddings: np.ndarray
    embedding_noise: float = 0.0
    seed: int = 0
    events: list[Event] = field(default_factory=list)

    def check_frame(self, frame_id: int) -> None:
        if not 1 <= frame_id <= self.frames:
            raise FrameRangeError(f"frame {frame_id} outside 1..{self.frames}")

    def present(self, frame_id: int) -> np.ndarray:
        self.check_frame(frame_id)
        return ~np.isnan(self.boxes[frame_id - 1, :, 0])

    def visible(self, frame_id: int) -> np.ndarray:
        return self.present(frame_id) & (self.visibility[frame_id - 1] > 0)

    def box(self, frame_id: int, index: int) -> Box | None:
        self.check_frame(frame_id)
        row = self.boxes[frame_id - 1, index]
        if np.isnan(row[0]):
            return None
        return Box.from_array(row)

    def index_of(self, identity: int) -> int:
        hit = np.nonzero(self.ids == identity)[0]
        if hit.size == 0:
            raise KeyError(identity)
        return int(hit[0])

    def embedding(self, identity: int, frame_id: int) -> np.ndarray:
        """Unit appearance vector of ``identity`` on ``frame_id``: base plus keyed noise."""
        i = self.index_of(identity)
        base = self.base_embeddings[i]
        d = base.shape[0]
        if self.embedding_noise > 0:
            noise = _core.keyed_normals(self.seed, _EMB_STREAM, frame_id, np.full(d, identity, dtype=np.int64),
                                        np.arange(d, dtype=np.int64), 1)[:, 0]
            v = base + self.embedding_noise * noise
        else:
            v = base.copy()
        return v / np.linalg.norm(v)

    def rows(self):
        """(frame, identity, x, y, w, h, visibility) for every present box, frame-major."""
        for t in range(self.frames):
            for i in range(self.ids.shape[0]):
                b = self.boxes[t, i]
                if not np.isnan(b[0]):
                    yield t + 1, int(self.ids[i]), float(b[0]), float(b[1]), float(b[2]), float(b[3]), float(self.visibility[t, i])

    def shot_change_frames(self) -> set[int]:
        return {e.frame for e in self.events if e.kind == "shot_change"}


def _cells(n: int, W: int, H: int) -> list[tuple[float, float, float, float]]:
    if n == 0:
        return []
    ncols = max(1, math.ceil(math.sqrt(n * W / H)))
    nrows = math.ceil(n / ncols)
    cw, ch = W / ncols, H / nrows
    return [((k % ncols) * cw, (k // ncols) * ch, cw, ch) for k in range(n)]


def _reflect(p: float, v: float, lo: float, hi: float) -> tuple[float, float]:
    if hi <= lo:
        return lo, 0.0
    for _ in range(8):
        if p < lo:
            p, v = 2 * lo - p, -v
        elif p > hi:
            p, v = 2 * hi - p, -v
        else:
            return p, v
    return min(max(p, lo), hi), v


def _base_embeddings(rng: np.random.Generator, n: int, d: int, min_dist: float) -> np.ndarray:
    out = []
    tries = 0
    while len(out) < n:
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        tries += 1
        if all(np.linalg.norm(v - u) >= min_dist for u in out) or tries > 1000 * (n + 1):
            out.append(v)
    return np.array(out).reshape(n, d)


def generate(cfg: SceneConfig) -> GroundTruthScene:
    """Deterministic scene from ``cfg`` (including its seed).

    Boxes move linearly with optional jitter and jumps, reflecting at the
    edges of their region (the frame, or a private cell).
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    T, n, W, H = cfg.frames, cfg.n_objects, cfg.frame_w, cfg.frame_h
    regions = _cells(n, W, H) if cfg.layout == "cells" else [(0.0, 0.0, float(W), float(H))] * n
    boxes = np.full((T, n, 4), np.nan)
    vis = np.ones((T, n))
    events: list[Event] = []
    shot = set(cfg.shot_changes)

    state = []
    for k in range(n):
        rx, ry, rw, rh = regions[k]
        w = min(rng.uniform(cfg.size_min, cfg.size_max), rw)
        h = min(w * rng.uniform(cfg.aspect_min, cfg.aspect_max), rh)
        x = rx + rng.uniform(0.0, rw - w)
        y = ry + rng.uniform(0.0, rh - h)
        speed = cfg.rel_speed * w if cfg.rel_speed > 0 else rng.uniform(cfg.speed_min, cfg.speed_max)
        ang = rng.uniform(0.0, 2 * math.pi)
        state.append([x, y, w, h, speed * math.cos(ang), speed * math.sin(ang)])

    for t in range(T):
        frame = t + 1
        if frame in shot and t > 0:
            events.append(Event(frame, "shot_change"))
            for k in range(n):
                rx, ry, rw, rh = regions[k]
                s = state[k]
                s[0] = rx + rng.uniform(0.0, rw - s[2])
                s[1] = ry + rng.uniform(0.0, rh - s[3])
        for k in range(n):
            boxes[t, k] = state[k][:4]
        # advance to the next frame
        for k in range(n):
            rx, ry, rw, rh = regions[k]
            x, y, w, h, vx, vy = state[k]
            jx, jy = rng.standard_normal(2) * cfg.jitter_sigma
            x, y = x + vx + jx, y + vy + jy
            if rng.random() < cfg.jump_prob:
                a = rng.uniform(0.0, 2 * math.pi)
                x += cfg.jump_magnitude * math.cos(a)
                y += cfg.jump_magnitude * math.sin(a)
                if t + 1 < T:
                    events.append(Event(frame + 1, "jump", k + 1))
            x, vx = _reflect(x, vx, rx, rx + rw - w)
            y, vy = _reflect(y, vy, ry, ry + rh - h)
            state[k] = [x, y, w, h, vx, vy]

    for k in range(n):
        if T >= 3 and rng.random() < cfg.occlusion_prob:
            L = int(rng.integers(cfg.occlusion_min, cfg.occlusion_max + 1))
            L = min(L, T - 2)
            s = int(rng.integers(2, T - L + 1))
            vis[s - 1:s - 1 + L, k] = 0.0
            events.append(Event(s, "occlusion", k + 1))
        if T >= 3 and rng.random() < cfg.absence_prob:
            L = int(rng.integers(cfg.absence_min, cfg.absence_max + 1))
            L = min(L, T - 2)
            s = int(rng.integers(2, T - L + 1))
            boxes[s - 1:s - 1 + L, k] = np.nan
            events.append(Event(s, "exit", k + 1))
            if s + L <= T:
                events.append(Event(s + L, "entry", k + 1))

    emb = _base_embeddings(rng, n, cfg.embedding_dim, cfg.embedding_min_distance)
    events.sort(key=lambda e: (e.frame, e.kind, e.identity))
    return GroundTruthScene(
        frames=T, frame_w=W, frame_h=H, ids=np.arange(1, n + 1), boxes=boxes, visibility=vis,
        base_embeddings=emb, embedding_noise=cfg.embedding_noise, seed=cfg.seed, events=events,
    )


BACKGROUND = 96


def _texture(seed: int, identity: int, w: int, h: int) -> np.ndarray:
    rng = np.random.default_rng([seed, _TEX_STREAM, identity])
    coarse = rng.integers(0, 256, size=(h // 2 + 1, w // 2 + 1))
    return np.kron(coarse, np.ones((2, 2), dtype=np.int64))[:h, :w]


def render_raster(scene: GroundTruthScene, frame_id: int) -> np.ndarray:
    """Grayscale frame: visible objects as textured rectangles on a flat background.

    Boxes are snapped to integer pixels; each identity's texture is anchored
    to its box's top-left corner so it moves with the object.
    """
    scene.check_frame(frame_id)
    img = np.full((scene.frame_h, scene.frame_w), BACKGROUND, dtype=np.uint8)
    vis = scene.visible(frame_id)
    for i in np.nonzero(vis)[0]:
        b = scene.boxes[frame_id - 1, i]
        x0, y0 = int(round(b[0])), int(round(b[1]))
        w, h = max(int(round(b[2])), 1), max(int(round(b[3])), 1)
        tex = _texture(scene.seed, int(scene.ids[i]), w, h)
        cx0, cy0 = max(x0, 0), max(y0, 0)
        cx1, cy1 = min(x0 + w, scene.frame_w), min(y0 + h, scene.frame_h)
        if cx1 <= cx0 or cy1 <= cy0:
            continue
        img[cy0:cy1, cx0:cx1] = tex[cy0 - y0:cy1 - y0, cx0 - x0:cx1 - x0]
    return img


def oracle_flow(scene: GroundTruthScene, frame_t: int) -> FlowField:
    """Exact displacement field from frame ``frame_t`` to ``frame_t + 1``.

    Each object visible on both frames paints its true displacement over the
    pixels whose centers lie in its frame-``t`` box; later objects win
    overlaps. Across a shot change the field is zero.
    """
    scene.check_frame(frame_t)
    if frame_t + 1 > scene.frames:
        raise FrameRangeError(f"no frame after {frame_t} (scene has {scene.frames})")
    W, H = scene.frame_w, scene.frame_h
    dx = np.zeros((H, W))
    dy = np.zeros((H, W))
    if frame_t + 1 in scene.shot_change_frames():
        return FlowField(dx, dy, W, H)
    both = scene.visible(frame_t) & scene.visible(frame_t + 1)
    for i in np.nonzero(both)[0]:
        b0 = scene.boxes[frame_t - 1, i]
        b1 = scene.boxes[frame_t, i]
        j0 = max(math.ceil(b0[0] - 0.5), 0)
        j1 = min(math.ceil(b0[0] + b0[2] - 0.5), W)
        i0 = max(math.ceil(b0[1] - 0.5), 0)
        i1 = min(math.ceil(b0[1] + b0[3] - 0.5), H)
        if j1 <= j0 or i1 <= i0:
            continue
        dx[i0:i1, j0:j1] = b1[0] - b0[0]
        dy[i0:i1, j0:j1] = b1[1] - b0[1]
    return FlowField(dx, dy, W, H)


class OracleFlow:
    """Flow provider backed by the scene's true motion."""

    def __init__(self, scene: GroundTruthScene):
        self.scene = scene

    def flow(self, frame_id: int) -> FlowField:
        return oracle_flow(self.scene, frame_id - 1)
