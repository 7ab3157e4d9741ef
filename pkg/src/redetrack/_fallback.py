"""Pure Python / numpy implementations of the hot kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature.
Floating point operations are written in the same order on both sides so
the two backends agree bit for bit on identical inputs.
"""
from __future__ import annotations

import math

import numpy as np

_M64 = 0xFFFFFFFFFFFFFFFF
_TWO_PI = 6.283185307179586


def _splitmix(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def _hash(seed, stream, frame, obj, anchor, k, j) -> int:
    h = _splitmix(seed & _M64)
    for v in (stream, frame, obj, anchor, k, j):
        h = _splitmix(h ^ (v & _M64))
    return h


def _unit(h: int) -> float:
    return ((h >> 11) + 0.5) * (1.0 / 9007199254740992.0)


def keyed_normal(seed, stream, frame, obj, anchor, k) -> float:
    """Standard normal draw addressed by an integer key (counter-based RNG)."""
    u1 = _unit(_hash(seed, stream, frame, obj, anchor, k, 0))
    u2 = _unit(_hash(seed, stream, frame, obj, anchor, k, 1))
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


def keyed_uniform(seed, stream, frame, obj, anchor, k) -> float:
    return _unit(_hash(seed, stream, frame, obj, anchor, k, 2))


def keyed_normals(seed, stream, frame, objs, anchors, ndraw):
    objs = np.asarray(objs, dtype=np.int64)
    anchors = np.asarray(anchors, dtype=np.int64)
    out = np.empty((objs.shape[0], ndraw), dtype=np.float64)
    for i in range(objs.shape[0]):
        o, a = int(objs[i]), int(anchors[i])
        for k in range(ndraw):
            out[i, k] = keyed_normal(seed, stream, frame, o, a, k)
    return out


def nms(boxes, order, threshold):
    n = boxes.shape[0]
    x1 = boxes[:, 0] + boxes[:, 2]
    y1 = boxes[:, 1] + boxes[:, 3]
    areas = boxes[:, 2] * boxes[:, 3]
    by = np.full(n, -1, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    keep = []
    for i in order:
        i = int(i)
        if not alive[i]:
            continue
        keep.append(i)
        alive[i] = False
        rest = np.nonzero(alive)[0]
        if rest.size == 0:
            continue
        ix = np.minimum(x1[i], x1[rest]) - np.maximum(boxes[i, 0], boxes[rest, 0])
        iy = np.minimum(y1[i], y1[rest]) - np.maximum(boxes[i, 1], boxes[rest, 1])
        ok = (ix > 0.0) & (iy > 0.0)
        inter = np.where(ok, ix * iy, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            ious = np.where(ok, np.minimum(inter / (areas[i] + areas[rest] - inter), 1.0), 0.0)
        hit = rest[ious > threshold]
        alive[hit] = False
        by[hit] = i
    return np.array(keep, dtype=np.int64), by


def _window(q0, qlen, maxlen, stride, n):
    lo = int(math.floor((q0 - maxlen / 2.0) / stride - 0.5))
    hi = int(math.ceil((q0 + qlen + maxlen / 2.0) / stride - 0.5))
    return max(lo, 0), min(hi, n - 1)


def _level_candidates(q, stride, fw, fh, offset, shapes, maxw, maxh):
    """Anchor ids and IoUs with box ``q`` for one level, in ascending id order."""
    c0, c1 = _window(q[0], q[2], maxw, stride, fw)
    r0, r1 = _window(q[1], q[3], maxh, stride, fh)
    if c1 < c0 or r1 < r0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    ns = shapes.shape[0]
    rows = np.arange(r0, r1 + 1)
    cols = np.arange(c0, c1 + 1)
    rr, cc, ss = np.meshgrid(rows, cols, np.arange(ns), indexing="ij")
    rr, cc, ss = rr.ravel(), cc.ravel(), ss.ravel()
    ids = offset + (rr * fw + cc) * ns + ss
    cx = (cc + 0.5) * stride
    cy = (rr + 0.5) * stride
    aw = shapes[ss, 0]
    ah = shapes[ss, 1]
    ax = cx - aw / 2.0
    ay = cy - ah / 2.0
    ix = np.minimum(ax + aw, q[0] + q[2]) - np.maximum(ax, q[0])
    iy = np.minimum(ay + ah, q[1] + q[3]) - np.maximum(ay, q[1])
    ok = (ix > 0.0) & (iy > 0.0)
    inter = np.where(ok, ix * iy, 0.0)
    ious = np.where(ok, np.minimum(inter / (aw * ah + q[2] * q[3] - inter), 1.0), 0.0)
    return ids.astype(np.int64), ious


def topk_anchors(query, strides, fws, fhs, offsets, shape_ptr, shapes, maxw, maxh, k):
    """Top-``k`` anchors by IoU with ``query``; IoU 0 excluded; ties to lower id."""
    q = np.asarray(query, dtype=np.float64)
    all_ids, all_ious = [], []
    for lv in range(strides.shape[0]):
        ids, ious = _level_candidates(
            q, strides[lv], int(fws[lv]), int(fhs[lv]), int(offsets[lv]),
            shapes[shape_ptr[lv]:shape_ptr[lv + 1]], maxw[lv], maxh[lv],
        )
        sel = ious > 0.0
        all_ids.append(ids[sel])
        all_ious.append(ious[sel])
    ids = np.concatenate(all_ids) if all_ids else np.zeros(0, dtype=np.int64)
    ious = np.concatenate(all_ious) if all_ious else np.zeros(0)
    order = np.lexsort((ids, -ious))[:k]
    return ids[order].astype(np.int64), ious[order]


def topk_anchors_batch(queries, strides, fws, fhs, offsets, shape_ptr, shapes, maxw, maxh, k):
    """Row-wise ``topk_anchors``: ids and IoUs padded with -1 / 0, plus per-row counts."""
    n = queries.shape[0]
    ids = np.full((n, k), -1, dtype=np.int64)
    ious = np.zeros((n, k))
    counts = np.zeros(n, dtype=np.int64)
    for i in range(n):
        a, v = topk_anchors(queries[i], strides, fws, fhs, offsets, shape_ptr, shapes, maxw, maxh, k)
        counts[i] = a.shape[0]
        ids[i, :a.shape[0]] = a
        ious[i, :a.shape[0]] = v
    return ids, ious, counts


def paint_responses(objs, strides, fws, fhs, offsets, shape_ptr, shapes, maxw, maxh, floor, owner, best):
    """Dense pass: each anchor takes the object with max IoU if IoU >= floor."""
    owner.fill(-1)
    best.fill(0.0)
    for m in range(objs.shape[0]):
        q = objs[m]
        for lv in range(strides.shape[0]):
            ids, ious = _level_candidates(
                q, strides[lv], int(fws[lv]), int(fhs[lv]), int(offsets[lv]),
                shapes[shape_ptr[lv]:shape_ptr[lv + 1]], maxw[lv], maxh[lv],
            )
            upd = (ious >= floor) & (ious > best[ids])
            best[ids[upd]] = ious[upd]
            owner[ids[upd]] = m


def hungarian_square(cost):
    """Minimum-cost perfect matching on a square matrix; returns row -> column."""
    n = cost.shape[0]
    inf = math.inf
    c = cost.tolist()
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            row = c[i0 - 1]
            ui0 = u[i0]
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    out = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        out[p[j] - 1] = j - 1
    return out


def _integral(a):
    s = np.zeros((a.shape[0] + 1, a.shape[1] + 1), dtype=np.float64)
    s[1:, 1:] = a.cumsum(0).cumsum(1)
    return s


def block_match(prev, nxt, block, radius, fw, fh):
    """SAD block matching on a ``fh x fw`` grid of cells; displacements in frame pixels."""
    prev = np.asarray(prev, dtype=np.float64)
    nxt = np.asarray(nxt, dtype=np.float64)
    H, W = prev.shape
    sx, sy = W / fw, H / fh
    jj = np.arange(fw)
    ii = np.arange(fh)
    bx = np.floor((jj + 0.5) * sx).astype(np.int64) - block // 2
    by = np.floor((ii + 0.5) * sy).astype(np.int64) - block // 2
    x0 = np.maximum(bx, 0)
    x1 = np.minimum(bx + block, W)
    y0 = np.maximum(by, 0)
    y1 = np.minimum(by + block, H)
    X0, Y0 = np.meshgrid(x0, y0)
    X1, Y1 = np.meshgrid(x1, y1)
    best = np.full((fh, fw), np.inf)
    bdx = np.zeros((fh, fw))
    bdy = np.zeros((fh, fw))
    zero_sad = None
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            valid = (X0 + dx >= 0) & (X1 + dx <= W) & (Y0 + dy >= 0) & (Y1 + dy <= H)
            diff = np.zeros((H, W))
            ys0, ys1 = max(0, -dy), min(H, H - dy)
            xs0, xs1 = max(0, -dx), min(W, W - dx)
            diff[ys0:ys1, xs0:xs1] = np.abs(prev[ys0:ys1, xs0:xs1] - nxt[ys0 + dy:ys1 + dy, xs0 + dx:xs1 + dx])
            S = _integral(diff)
            sad = S[Y1, X1] - S[Y0, X1] - S[Y1, X0] + S[Y0, X0]
            sad = np.where(valid, sad, np.inf)
            if dx == 0 and dy == 0:
                zero_sad = sad
            better = sad < best
            best = np.where(better, sad, best)
            bdx = np.where(better, float(dx), bdx)
            bdy = np.where(better, float(dy), bdy)
    at_zero = zero_sad <= best
    bdx = np.where(at_zero, 0.0, bdx)
    bdy = np.where(at_zero, 0.0, bdy)
    return bdx, bdy


def fill_dense(owner, best, objs, priors, use_constant, constant, conf, boxes):
    """Per-anchor head output: owner's box and base confidence, or the prior box with confidence 0."""
    hit = owner >= 0
    conf.fill(0.0)
    conf[hit] = constant if use_constant else best[hit]
    np.copyto(boxes, priors)
    boxes[hit] = objs[owner[hit]]
