"""Location prediction for tracked boxes: identity and flow-assisted.

A flow field may be coarser than the frame. Displacements are stored in
field cells and scaled to frame pixels when sampled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from . import _core
from .errors import ConfigError, ContractError, DegenerateInputError, ParseError
from .geometry import Box, clip_to_frame, shift


@dataclass(frozen=True, eq=False)
class FlowField:
    dx: np.ndarray  # (height, width), field units
    dy: np.ndarray
    frame_w: int
    frame_h: int

    def __post_init__(self):
        if self.dx.shape != self.dy.shape or self.dx.ndim != 2 or self.dx.size == 0:
            raise ContractError("flow dx and dy must be equal-shape non-empty 2-D grids")
        if not (np.all(np.isfinite(self.dx)) and np.all(np.isfinite(self.dy))):
            raise ContractError("flow field contains non-finite values")
        if self.frame_w <= 0 or self.frame_h <= 0:
            raise ContractError("flow field frame size must be positive")

    @property
    def width(self) -> int:
        return self.dx.shape[1]

    @property
    def height(self) -> int:
        return self.dx.shape[0]

    @property
    def scale(self) -> tuple[float, float]:
        """Frame pixels per field cell along x and y."""
        return self.frame_w / self.width, self.frame_h / self.height

    @classmethod
    def zeros(cls, frame_w: int, frame_h: int, width: int | None = None, height: int | None = None) -> "FlowField":
        width = frame_w if width is None else width
        height = frame_h if height is None else height
        z = np.zeros((height, width))
        return cls(z, z.copy(), frame_w, frame_h)

    @classmethod
    def uniform(cls, d, frame_w: int, frame_h: int, width: int | None = None, height: int | None = None) -> "FlowField":
        """Constant displacement ``d`` given in frame pixels."""
        f = cls.zeros(frame_w, frame_h, width, height)
        sx, sy = f.scale
        return cls(np.full(f.dx.shape, d[0] / sx), np.full(f.dy.shape, d[1] / sy), frame_w, frame_h)

    def scaled(self, alpha: float) -> "FlowField":
        return FlowField(self.dx * alpha, self.dy * alpha, self.frame_w, self.frame_h)


class FlowProvider(Protocol):
    def flow(self, frame_id: int) -> FlowField:
        """Field mapping frame ``frame_id - 1`` onto frame ``frame_id``."""
        ...


def predict_identity(b: Box) -> Box:
    return b


def mean_flow_in_box(field: FlowField, b: Box) -> tuple[float, float]:
    """Mean displacement (frame pixels) over field cells whose centers lie in ``b``.

    ``b`` is clipped to the frame first. When no cell center falls inside the
    clipped box the cell containing its center is used.
    """
    c = clip_to_frame(b, field.frame_w, field.frame_h)
    if c is None:
        raise DegenerateInputError(f"box {b} lies entirely outside the {field.frame_w}x{field.frame_h} frame")
    sx, sy = field.scale
    # cell j has center (j + 0.5) * sx; inside when x0 <= center < x1
    j0 = max(math.ceil(c.x / sx - 0.5), 0)
    j1 = min(math.ceil((c.x + c.w) / sx - 0.5), field.width)
    i0 = max(math.ceil(c.y / sy - 0.5), 0)
    i1 = min(math.ceil((c.y + c.h) / sy - 0.5), field.height)
    if j1 <= j0 or i1 <= i0:
        j = min(int(c.cx / sx), field.width - 1)
        i = min(int(c.cy / sy), field.height - 1)
        return float(field.dx[i, j]) * sx, float(field.dy[i, j]) * sy
    return _mean(field.dx[i0:i1, j0:j1]) * sx, _mean(field.dy[i0:i1, j0:j1]) * sy


def _mean(a: np.ndarray) -> float:
    lo, hi = float(a.min()), float(a.max())
    # constant regions return their value exactly
    return lo if lo == hi else float(a.mean())


def predict_flow(b: Box, field: FlowField) -> Box:
    return shift(b, mean_flow_in_box(field, b))


def block_matching_flow(prev_frame: np.ndarray, next_frame: np.ndarray, block: int = 8, radius: int = 4,
                        step: int = 8) -> FlowField:
    """Integer SAD block matching on a grid of ``step``-pixel cells.

    Each cell compares a ``block``-sized patch around its center against
    every displacement within ``radius``. Ties go to zero displacement, then
    to the first displacement in (dy, dx) scan order.
    """
    prev_frame = np.asarray(prev_frame)
    next_frame = np.asarray(next_frame)
    if prev_frame.ndim != 2 or prev_frame.shape != next_frame.shape:
        raise ContractError(f"block matching needs equal single-channel rasters, got {prev_frame.shape} and {next_frame.shape}")
    H, W = prev_frame.shape
    if block < 1 or step < 1 or radius < 0:
        raise ConfigError("block, step must be >= 1 and radius >= 0")
    if block > W or block > H:
        raise ConfigError(f"block size {block} exceeds frame {W}x{H}")
    fw, fh = math.ceil(W / step), math.ceil(H / step)
    dx, dy = _core.block_match(prev_frame, next_frame, int(block), int(radius), fw, fh)
    sx, sy = W / fw, H / fh
    return FlowField(dx / sx, dy / sy, W, H)


class ZeroFlow:
    def __init__(self, frame_w: int, frame_h: int):
        self._field = FlowField.zeros(frame_w, frame_h, 1, 1)

    def flow(self, frame_id: int) -> FlowField:
        return self._field


class BlockMatchingFlow:
    """Flow provider estimating motion from consecutive rasters."""

    def __init__(self, raster_source, block: int = 8, radius: int = 4, step: int = 8):
        # raster_source(frame_id) -> 2-D array
        self._raster = raster_source
        self.block, self.radius, self.step = block, radius, step

    def flow(self, frame_id: int) -> FlowField:
        return block_matching_flow(self._raster(frame_id - 1), self._raster(frame_id), self.block, self.radius, self.step)


def write_pgm(path, raster: np.ndarray) -> None:
    a = np.asarray(raster)
    if a.ndim != 2:
        raise ContractError("PGM raster must be 2-D")
    a = np.clip(np.rint(a), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (a.shape[1], a.shape[0]))
        f.write(a.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header", path)
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ParseError(f"not a binary PGM (magic {tokens[0]!r})", path)
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as e:
        raise ParseError(f"bad PGM header: {e}", path) from None
    if maxval > 255:
        raise ParseError("16-bit PGM not supported", path)
    pos += 1
    body = data[pos:pos + w * h]
    if len(body) != w * h:
        raise ParseError(f"PGM body has {len(body)} bytes, expected {w * h}", path)
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()
