"""MOTChallenge-style text files, embedding sidecars and scene directories."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ContractError, ParseError
from ..geometry import Box
from ..metrics import TrajectorySet
from ..simulator import Event, GroundTruthScene


def _fmt(v: float) -> str:
    return repr(float(v))


def _rows(path):
    """Yield (line number, fields) for non-blank, non-comment lines."""
    try:
        fh = open(path)
    except OSError as e:
        raise ParseError(f"cannot open: {e.strerror}", path) from None
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, [p.strip() for p in line.split(",")]


def _box(fields, path, lineno) -> Box:
    try:
        return Box(float(fields[0]), float(fields[1]), float(fields[2]), float(fields[3]))
    except (ValueError, ContractError) as e:
        raise ParseError(f"bad box: {e}", path, lineno) from None


def write_gt(path, rows) -> None:
    """rows: (frame, id, x, y, w, h, visibility)."""
    lines = ["# frame,id,x,y,w,h,conf,class,visibility"]
    for f, i, x, y, w, h, v in rows:
        lines.append(",".join([str(f), str(i), _fmt(x), _fmt(y), _fmt(w), _fmt(h), "1", "1", _fmt(v)]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_gt(path) -> list[tuple[int, int, Box, float]]:
    out = []
    for lineno, p in _rows(path):
        if len(p) < 6:
            raise ParseError(f"expected at least 6 fields, got {len(p)}", path, lineno)
        try:
            f, i = int(p[0]), int(p[1])
            vis = float(p[8]) if len(p) >= 9 else 1.0
        except ValueError as e:
            raise ParseError(str(e), path, lineno) from None
        out.append((f, i, _box(p[2:6], path, lineno), vis))
    return out


def write_results(path, rows) -> None:
    """rows: (frame, id, Box, confidence), written in the given order."""
    lines = ["# frame,id,x,y,w,h,conf,-1,-1,-1"]
    for f, i, b, c in rows:
        lines.append(",".join([str(f), str(i), _fmt(b.x), _fmt(b.y), _fmt(b.w), _fmt(b.h), _fmt(c), "-1", "-1", "-1"]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_results(path) -> list[tuple[int, int, Box, float]]:
    out = []
    for lineno, p in _rows(path):
        if len(p) < 6:
            raise ParseError(f"expected at least 6 fields, got {len(p)}", path, lineno)
        try:
            f, i = int(p[0]), int(p[1])
            c = float(p[6]) if len(p) >= 7 else 1.0
        except ValueError as e:
            raise ParseError(str(e), path, lineno) from None
        out.append((f, i, _box(p[2:6], path, lineno), c))
    return out


def trajectories(rows, min_visibility: float | None = None) -> TrajectorySet:
    """TrajectorySet from parsed rows; with ``min_visibility`` gt rows below it are dropped."""
    ts = TrajectorySet()
    for f, i, b, v in rows:
        if min_visibility is not None and not v > min_visibility:
            continue
        try:
            ts.add(f, i, b)
        except ContractError as e:
            raise ParseError(str(e)) from None
    return ts


def write_embeddings(path, table) -> None:
    """table: iterable of (frame, key, vector)."""
    lines = ["# frame,id,v1,...,vN"]
    for f, k, v in table:
        lines.append(",".join([str(f), str(k)] + [_fmt(x) for x in v]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_embeddings(path) -> dict[tuple[int, int], np.ndarray]:
    table: dict[tuple[int, int], np.ndarray] = {}
    dim = None
    for lineno, p in _rows(path):
        try:
            f, k = int(p[0]), int(p[1])
            v = np.array([float(x) for x in p[2:]])
        except (ValueError, IndexError) as e:
            raise ParseError(str(e), path, lineno) from None
        if v.size == 0 or (dim is not None and v.size != dim):
            raise ParseError(f"embedding length {v.size} differs from {dim}", path, lineno)
        dim = v.size
        table[(f, k)] = v
    return table


def scene_table(scene: GroundTruthScene):
    """Per-frame embeddings of every visible identity."""
    for t in range(1, scene.frames + 1):
        for i in np.nonzero(scene.visible(t))[0]:
            ident = int(scene.ids[i])
            yield t, ident, scene.embedding(ident, t)


def load_scene(directory) -> GroundTruthScene:
    """Rebuild a scene from a simulate output directory (gt.txt + manifest.json)."""
    d = Path(directory)
    try:
        man = json.loads((d / "manifest.json").read_text())
    except OSError as e:
        raise ParseError(f"cannot open: {e.strerror}", d / "manifest.json") from None
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, d / "manifest.json", e.lineno) from None
    frames, W, H = int(man["frames"]), int(man["frame_w"]), int(man["frame_h"])
    ids = np.array(man["ids"], dtype=np.int64)
    col = {int(k): n for n, k in enumerate(ids)}
    boxes = np.full((frames, len(ids), 4), np.nan)
    vis = np.zeros((frames, len(ids)))
    for f, i, b, v in read_gt(d / "gt.txt"):
        if not 1 <= f <= frames or i not in col:
            raise ParseError(f"row for frame {f}, id {i} outside the manifest", d / "gt.txt")
        boxes[f - 1, col[i]] = (b.x, b.y, b.w, b.h)
        vis[f - 1, col[i]] = v
    events = [Event(int(e["frame"]), str(e["kind"]), int(e.get("identity", -1))) for e in man.get("events", [])]
    return GroundTruthScene(frames, W, H, ids, boxes, vis, np.zeros((len(ids), 0)), 0.0, int(man.get("seed", 0)), events)
