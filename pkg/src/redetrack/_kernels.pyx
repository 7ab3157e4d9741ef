# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Semantics are defined by ``_fallback.py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, sqrt, log, cos, INFINITY
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef double TWO_PI = 6.283185307179586


cdef inline uint64_t _splitmix(uint64_t z) nogil:
    z = z + 0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _hash(int64_t seed, int64_t stream, int64_t frame, int64_t obj,
                           int64_t anchor, int64_t k, int64_t j) nogil:
    cdef uint64_t h = _splitmix(<uint64_t>seed)
    h = _splitmix(h ^ <uint64_t>stream)
    h = _splitmix(h ^ <uint64_t>frame)
    h = _splitmix(h ^ <uint64_t>obj)
    h = _splitmix(h ^ <uint64_t>anchor)
    h = _splitmix(h ^ <uint64_t>k)
    h = _splitmix(h ^ <uint64_t>j)
    return h


cdef inline double _unit(uint64_t h) nogil:
    return ((<double>(h >> 11)) + 0.5) * (1.0 / 9007199254740992.0)


cdef inline double _normal(int64_t seed, int64_t stream, int64_t frame, int64_t obj,
                           int64_t anchor, int64_t k) nogil:
    cdef double u1 = _unit(_hash(seed, stream, frame, obj, anchor, k, 0))
    cdef double u2 = _unit(_hash(seed, stream, frame, obj, anchor, k, 1))
    return sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)


def keyed_normal(int64_t seed, int64_t stream, int64_t frame, int64_t obj, int64_t anchor, int64_t k):
    return _normal(seed, stream, frame, obj, anchor, k)


def keyed_uniform(int64_t seed, int64_t stream, int64_t frame, int64_t obj, int64_t anchor, int64_t k):
    return _unit(_hash(seed, stream, frame, obj, anchor, k, 2))


def keyed_normals(int64_t seed, int64_t stream, int64_t frame, objs, anchors, int ndraw):
    cdef int64_t[::1] o = np.ascontiguousarray(objs, dtype=np.int64)
    cdef int64_t[::1] a = np.ascontiguousarray(anchors, dtype=np.int64)
    cdef Py_ssize_t n = o.shape[0], i
    cdef int k
    out = np.empty((n, ndraw), dtype=np.float64)
    cdef double[:, ::1] res = out
    for i in range(n):
        for k in range(ndraw):
            res[i, k] = _normal(seed, stream, frame, o[i], a[i], k)
    return out


cdef inline double _iou(double ax, double ay, double aw, double ah,
                        double bx, double by, double bw, double bh) nogil:
    cdef double ix = min(ax + aw, bx + bw) - max(ax, bx)
    cdef double iy = min(ay + ah, by + bh) - max(ay, by)
    cdef double inter
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    # rounding can push nearly identical boxes a few ulps above 1
    return min(inter / (aw * ah + bw * bh - inter), 1.0)


def nms(double[:, ::1] boxes, int64_t[::1] order, double threshold):
    cdef Py_ssize_t n = boxes.shape[0], a, b, i, j
    by_arr = np.full(n, -1, dtype=np.int64)
    cdef int64_t[::1] by = by_arr
    alive_arr = np.ones(n, dtype=np.uint8)
    cdef unsigned char[::1] alive = alive_arr
    keep = []
    for a in range(n):
        i = order[a]
        if not alive[i]:
            continue
        keep.append(i)
        alive[i] = 0
        for b in range(a + 1, n):
            j = order[b]
            if not alive[j]:
                continue
            if _iou(boxes[i, 0], boxes[i, 1], boxes[i, 2], boxes[i, 3],
                    boxes[j, 0], boxes[j, 1], boxes[j, 2], boxes[j, 3]) > threshold:
                alive[j] = 0
                by[j] = i
    return np.array(keep, dtype=np.int64), by_arr


cdef inline void _window(double q0, double qlen, double maxlen, double stride, int64_t n,
                         int64_t* lo, int64_t* hi) nogil:
    cdef int64_t l = <int64_t>floor((q0 - maxlen / 2.0) / stride - 0.5)
    cdef int64_t h = <int64_t>ceil((q0 + qlen + maxlen / 2.0) / stride - 0.5)
    lo[0] = l if l > 0 else 0
    hi[0] = h if h < n - 1 else n - 1


cdef inline void _center_window(double center, double reach, double stride, int64_t n,
                                int64_t* lo, int64_t* hi) nogil:
    # cells whose center lies within ``reach`` of ``center``, padded by one cell
    cdef int64_t l = <int64_t>floor((center - reach) / stride - 0.5) - 1
    cdef int64_t h = <int64_t>ceil((center + reach) / stride - 0.5) + 1
    lo[0] = l if l > 0 else 0
    hi[0] = h if h < n - 1 else n - 1


cdef inline int64_t _clamp_cell(int64_t i, int64_t n) nogil:
    return 0 if i < 0 else (n - 1 if i > n - 1 else i)


# slack on the area-ratio bound so rounding in _iou can never beat it
cdef double BOUND_SLACK = 1.0 + 1e-9


cdef inline double _area_bound(double aw, double ah, double qw, double qh) nogil:
    cdef double a = aw * ah, b = qw * qh
    return (a / b if a < b else b / a) * BOUND_SLACK


cdef void _topk_one(double qx, double qy, double qw, double qh,
                    double[::1] strides, int64_t[::1] fws, int64_t[::1] fhs,
                    int64_t[::1] offsets, int64_t[::1] shape_ptr, double[:, ::1] shapes,
                    int k, int64_t* bid, double* biou, int* count_out,
                    int64_t* ord_lv, int64_t* ord_s, double* ord_b) nogil:
    cdef int count = 0, p, q, nsh = 0, t
    cdef Py_ssize_t lv
    cdef int64_t c0, c1, r0, r1, r, c, s, ns, fw, aid, li, si
    cdef double st, cx, cy, aw, ah, v, bnd, seed, floor_iou, amax, ex, ey
    # visit (level, shape) pairs by decreasing IoU bound so pruning bites early
    for lv in range(strides.shape[0]):
        for s in range(shape_ptr[lv + 1] - shape_ptr[lv]):
            bnd = _area_bound(shapes[shape_ptr[lv] + s, 0], shapes[shape_ptr[lv] + s, 1], qw, qh)
            t = nsh
            while t > 0 and ord_b[t - 1] < bnd:
                ord_b[t] = ord_b[t - 1]
                ord_lv[t] = ord_lv[t - 1]
                ord_s[t] = ord_s[t - 1]
                t -= 1
            ord_b[t] = bnd
            ord_lv[t] = lv
            ord_s[t] = s
            nsh += 1
    # for k == 1 the anchor of the best-bound shape nearest the query center is a lower bound on the answer
    seed = 0.0
    if k == 1 and nsh > 0:
        li = ord_lv[0]
        st = strides[li]
        aw = shapes[shape_ptr[li] + ord_s[0], 0]
        ah = shapes[shape_ptr[li] + ord_s[0], 1]
        c = _clamp_cell(<int64_t>floor((qx + qw / 2.0) / st), fws[li])
        r = _clamp_cell(<int64_t>floor((qy + qh / 2.0) / st), fhs[li])
        seed = _iou((c + 0.5) * st - aw / 2.0, (r + 0.5) * st - ah / 2.0, aw, ah, qx, qy, qw, qh)
    for t in range(nsh):
        floor_iou = biou[k - 1] if count == k else seed
        if ord_b[t] < floor_iou:
            break
        li = ord_lv[t]
        si = ord_s[t]
        st = strides[li]
        fw = fws[li]
        ns = shape_ptr[li + 1] - shape_ptr[li]
        aw = shapes[shape_ptr[li] + si, 0]
        ah = shapes[shape_ptr[li] + si, 1]
        if floor_iou > 0.0:
            amax = aw * ah if aw * ah > qw * qh else qw * qh
            ex = (aw + qw) / 2.0 - floor_iou * amax / (ah if ah < qh else qh) / BOUND_SLACK
            ey = (ah + qh) / 2.0 - floor_iou * amax / (aw if aw < qw else qw) / BOUND_SLACK
            if ex < 0.0 or ey < 0.0:
                continue
            _center_window(qx + qw / 2.0, ex, st, fw, &c0, &c1)
            _center_window(qy + qh / 2.0, ey, st, fhs[li], &r0, &r1)
        else:
            _window(qx, qw, aw, st, fw, &c0, &c1)
            _window(qy, qh, ah, st, fhs[li], &r0, &r1)
        for r in range(r0, r1 + 1):
            cy = (r + 0.5) * st
            for c in range(c0, c1 + 1):
                cx = (c + 0.5) * st
                v = _iou(cx - aw / 2.0, cy - ah / 2.0, aw, ah, qx, qy, qw, qh)
                if v <= 0.0:
                    continue
                aid = offsets[li] + (r * fw + c) * ns + si
                if count == k and (v < biou[k - 1] or (v == biou[k - 1] and aid > bid[k - 1])):
                    continue
                p = count if count < k else k - 1
                while p > 0 and (biou[p - 1] < v or (biou[p - 1] == v and bid[p - 1] > aid)):
                    p -= 1
                q = count if count < k else k - 1
                while q > p:
                    biou[q] = biou[q - 1]
                    bid[q] = bid[q - 1]
                    q -= 1
                biou[p] = v
                bid[p] = aid
                if count < k:
                    count += 1
    count_out[0] = count


def topk_anchors_batch(double[:, ::1] queries, double[::1] strides, int64_t[::1] fws, int64_t[::1] fhs,
                       int64_t[::1] offsets, int64_t[::1] shape_ptr, double[:, ::1] shapes,
                       double[::1] maxw, double[::1] maxh, int k):
    """Rows of the top-``k`` anchor ids and IoUs per query, padded with -1 / 0."""
    cdef Py_ssize_t n = queries.shape[0], i
    cdef Py_ssize_t nshape = shapes.shape[0]
    ids_arr = np.full((n, k), -1, dtype=np.int64)
    ious_arr = np.zeros((n, k), dtype=np.float64)
    counts_arr = np.zeros(n, dtype=np.int64)
    cdef int64_t[:, ::1] bid = ids_arr
    cdef double[:, ::1] biou = ious_arr
    cdef int64_t[::1] counts = counts_arr
    ord_lv_a = np.empty(nshape + 1, dtype=np.int64)
    ord_s_a = np.empty(nshape + 1, dtype=np.int64)
    ord_b_a = np.empty(nshape + 1, dtype=np.float64)
    cdef int64_t[::1] ord_lv = ord_lv_a
    cdef int64_t[::1] ord_s = ord_s_a
    cdef double[::1] ord_b = ord_b_a
    cdef int cnt
    if n == 0 or k < 1:
        return ids_arr, ious_arr, counts_arr
    with nogil:
        for i in range(n):
            _topk_one(queries[i, 0], queries[i, 1], queries[i, 2], queries[i, 3], strides, fws, fhs,
                      offsets, shape_ptr, shapes, k, &bid[i, 0], &biou[i, 0], &cnt,
                      &ord_lv[0], &ord_s[0], &ord_b[0])
            counts[i] = cnt
    return ids_arr, ious_arr, counts_arr


def topk_anchors(query, double[::1] strides, int64_t[::1] fws, int64_t[::1] fhs,
                 int64_t[::1] offsets, int64_t[::1] shape_ptr, double[:, ::1] shapes,
                 double[::1] maxw, double[::1] maxh, int k):
    q = np.ascontiguousarray(np.asarray(query, dtype=np.float64).reshape(1, 4))
    ids, ious, counts = topk_anchors_batch(q, strides, fws, fhs, offsets, shape_ptr, shapes, maxw, maxh, k)
    n = counts[0]
    return ids[0, :n].copy(), ious[0, :n].copy()


def paint_responses(double[:, ::1] objs, double[::1] strides, int64_t[::1] fws, int64_t[::1] fhs,
                    int64_t[::1] offsets, int64_t[::1] shape_ptr, double[:, ::1] shapes,
                    double[::1] maxw, double[::1] maxh, double floor_iou,
                    int64_t[::1] owner, double[::1] best):
    cdef Py_ssize_t m, lv, a
    cdef int64_t c0, c1, r0, r1, r, c, s, ns, fw, aid
    cdef double st, cx, cy, aw, ah, v, qx, qy, qw, qh, amax, ex, ey
    with nogil:
        for a in range(owner.shape[0]):
            owner[a] = -1
            best[a] = 0.0
        for m in range(objs.shape[0]):
            qx = objs[m, 0]
            qy = objs[m, 1]
            qw = objs[m, 2]
            qh = objs[m, 3]
            for lv in range(strides.shape[0]):
                st = strides[lv]
                fw = fws[lv]
                ns = shape_ptr[lv + 1] - shape_ptr[lv]
                for s in range(ns):
                    aw = shapes[shape_ptr[lv] + s, 0]
                    ah = shapes[shape_ptr[lv] + s, 1]
                    if _area_bound(aw, ah, qw, qh) < floor_iou:
                        continue
                    if floor_iou > 0.0:
                        # IoU >= floor needs overlap >= floor * max area / min side along each axis
                        amax = aw * ah if aw * ah > qw * qh else qw * qh
                        ex = (aw + qw) / 2.0 - floor_iou * amax / (ah if ah < qh else qh) / BOUND_SLACK
                        ey = (ah + qh) / 2.0 - floor_iou * amax / (aw if aw < qw else qw) / BOUND_SLACK
                        if ex < 0.0 or ey < 0.0:
                            continue
                        _center_window(qx + qw / 2.0, ex, st, fw, &c0, &c1)
                        _center_window(qy + qh / 2.0, ey, st, fhs[lv], &r0, &r1)
                    else:
                        _window(qx, qw, aw, st, fw, &c0, &c1)
                        _window(qy, qh, ah, st, fhs[lv], &r0, &r1)
                    for r in range(r0, r1 + 1):
                        cy = (r + 0.5) * st
                        for c in range(c0, c1 + 1):
                            cx = (c + 0.5) * st
                            v = _iou(cx - aw / 2.0, cy - ah / 2.0, aw, ah, qx, qy, qw, qh)
                            if v < floor_iou:
                                continue
                            aid = offsets[lv] + (r * fw + c) * ns + s
                            if v > best[aid]:
                                best[aid] = v
                                owner[aid] = m


def hungarian_square(cost_in):
    cdef double[:, ::1] cost = np.ascontiguousarray(cost_in, dtype=np.float64)
    cdef Py_ssize_t n = cost.shape[0], i, j, j0, j1, i0
    u_a = np.zeros(n + 1)
    v_a = np.zeros(n + 1)
    p_a = np.zeros(n + 1, dtype=np.int64)
    way_a = np.zeros(n + 1, dtype=np.int64)
    minv_a = np.empty(n + 1)
    used_a = np.empty(n + 1, dtype=np.uint8)
    cdef double[::1] u = u_a, v = v_a, minv = minv_a
    cdef int64_t[::1] p = p_a, way = way_a
    cdef unsigned char[::1] used = used_a
    cdef double delta, cur, ui0
    with nogil:
        for i in range(1, n + 1):
            p[0] = i
            j0 = 0
            for j in range(n + 1):
                minv[j] = INFINITY
                used[j] = 0
            while True:
                used[j0] = 1
                i0 = p[j0]
                delta = INFINITY
                j1 = 0
                ui0 = u[i0]
                for j in range(1, n + 1):
                    if not used[j]:
                        cur = cost[i0 - 1, j - 1] - ui0 - v[j]
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
    cdef int64_t[::1] o = out
    for j in range(1, n + 1):
        o[p[j] - 1] = j - 1
    return out


def block_match(prev_in, next_in, int block, int radius, int fw, int fh):
    cdef double[:, ::1] prev = np.ascontiguousarray(prev_in, dtype=np.float64)
    cdef double[:, ::1] nxt = np.ascontiguousarray(next_in, dtype=np.float64)
    cdef Py_ssize_t H = prev.shape[0], W = prev.shape[1]
    cdef double sx = <double>W / fw, sy = <double>H / fh
    dx_a = np.zeros((fh, fw))
    dy_a = np.zeros((fh, fw))
    cdef double[:, ::1] odx = dx_a, ody = dy_a
    cdef int i, j, dx, dy, bdx, bdy
    cdef Py_ssize_t x0, x1, y0, y1, x, y, bx, by
    cdef double sad, best, zero_sad, d
    with nogil:
        for i in range(fh):
            by = <Py_ssize_t>floor((i + 0.5) * sy) - block // 2
            y0 = by if by > 0 else 0
            y1 = by + block if by + block < H else H
            for j in range(fw):
                bx = <Py_ssize_t>floor((j + 0.5) * sx) - block // 2
                x0 = bx if bx > 0 else 0
                x1 = bx + block if bx + block < W else W
                best = INFINITY
                bdx = 0
                bdy = 0
                zero_sad = INFINITY
                for dy in range(-radius, radius + 1):
                    if y0 + dy < 0 or y1 + dy > H:
                        continue
                    for dx in range(-radius, radius + 1):
                        if x0 + dx < 0 or x1 + dx > W:
                            continue
                        sad = 0.0
                        for y in range(y0, y1):
                            for x in range(x0, x1):
                                d = prev[y, x] - nxt[y + dy, x + dx]
                                sad += d if d >= 0 else -d
                        if dx == 0 and dy == 0:
                            zero_sad = sad
                        if sad < best:
                            best = sad
                            bdx = dx
                            bdy = dy
                if zero_sad <= best:
                    bdx = 0
                    bdy = 0
                odx[i, j] = bdx
                ody[i, j] = bdy
    return dx_a, dy_a


def fill_dense(int64_t[::1] owner, double[::1] best, double[:, ::1] objs, double[:, ::1] priors,
               int use_constant, double constant, double[::1] conf, double[:, ::1] boxes):
    cdef Py_ssize_t a, m, j
    with nogil:
        for a in range(owner.shape[0]):
            m = owner[a]
            if m >= 0:
                conf[a] = constant if use_constant else best[a]
                for j in range(4):
                    boxes[a, j] = objs[m, j]
            else:
                conf[a] = 0.0
                for j in range(4):
                    boxes[a, j] = priors[a, j]
