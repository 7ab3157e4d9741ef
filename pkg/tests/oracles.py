"""Exhaustive reference implementations used as test oracles.

These enumerate every candidate instead of solving anything cleverly, so
they are only usable on tiny inputs.
"""
import itertools

import numpy as np

from redetrack.geometry import Box, iou


def brute_assignment(cost, allowed=None):
    """Best partial assignment: most permitted pairs first, then least summed cost.

    Returns (pairs sorted by row, cost summed in row order).
    """
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    if allowed is None:
        allowed = np.isfinite(cost)
    N = max(n, m)
    best_key, best_pairs = None, []
    for perm in itertools.permutations(range(N)):
        pairs = [(r, perm[r]) for r in range(n) if perm[r] < m and allowed[r, perm[r]]]
        total = 0.0
        for r, c in pairs:
            total += cost[r, c]
        key = (-len(pairs), total)
        if best_key is None or key < best_key:
            best_key, best_pairs = key, pairs
    if best_key is None:
        return [], 0.0
    return best_pairs, best_key[1]


def _best_partial_matching(gs, ps, ov, gate):
    """Max-cardinality, then min sum(1 - IoU), matching among pairs at or above the gate."""
    best_key, best = None, {}
    for k in range(min(len(gs), len(ps)), -1, -1):
        for gsub in itertools.combinations(gs, k):
            for psub in itertools.permutations(ps, k):
                if all(ov[g, p] >= gate for g, p in zip(gsub, psub)):
                    total = sum(1.0 - ov[g, p] for g, p in zip(gsub, psub))
                    key = (-k, total)
                    if best_key is None or key < best_key:
                        best_key, best = key, dict(zip(gsub, psub))
        if best_key is not None:
            return best
    return best


def brute_metrics(gt, pred, gate=0.5):
    """Reference CLEAR and identity counts for {(frame, id): Box} dictionaries."""
    frames = sorted({f for f, _ in gt} | {f for f, _ in pred})
    prev = {}
    last_p, last_g = {}, {}
    was_matched, missed = set(), set()
    sw = tr = frag = fp = fn = tp = 0
    for f in frames:
        g_here = {i: b for (ff, i), b in gt.items() if ff == f}
        p_here = {i: b for (ff, i), b in pred.items() if ff == f}
        ov = {(g, p): iou(gb, pb) for g, gb in g_here.items() for p, pb in p_here.items()}
        cur = {g: p for g, p in prev.items() if (g, p) in ov and ov[g, p] >= gate}
        rest_g = [g for g in sorted(g_here) if g not in cur]
        rest_p = [p for p in sorted(p_here) if p not in cur.values()]
        cur.update(_best_partial_matching(rest_g, rest_p, ov, gate))
        tp += len(cur)
        fn += len(g_here) - len(cur)
        fp += len(p_here) - len(cur)
        for g, p in cur.items():
            sw += g in last_p and last_p[g] != p
            tr += p in last_g and last_g[p] != g
            frag += g in missed
            missed.discard(g)
            last_p[g], last_g[p] = p, g
            was_matched.add(g)
        missed |= {g for g in g_here if g not in cur and g in was_matched}
        prev = cur

    gids = sorted({i for _, i in gt})
    pids = sorted({i for _, i in pred})
    counts = {}
    for (f, g), gb in gt.items():
        for p in pids:
            pb = pred.get((f, p))
            if pb is not None and iou(gb, pb) >= gate:
                counts[g, p] = counts.get((g, p), 0) + 1
    idtp = 0
    for k in range(min(len(gids), len(pids)) + 1):
        for gsub in itertools.combinations(gids, k):
            for psub in itertools.permutations(pids, k):
                idtp = max(idtp, sum(counts.get((g, p), 0) for g, p in zip(gsub, psub)))
    n_gt, n_pred = len(gt), len(pred)
    mota = 1.0 - (fn + fp + sw) / n_gt if n_gt else (1.0 if fp == 0 else 0.0)
    den = n_gt + n_pred
    idf1 = 2 * idtp / den if den else 1.0
    return {"fp": fp, "fn": fn, "id_switches": sw, "transfers": tr, "fragments": frag,
            "matches": tp, "idtp": idtp, "mota": mota, "idf1": idf1}


def random_instance(rng, max_ids=3, max_frames=5):
    """Micro tracking instance: jittered, sometimes swapped or spurious predictions."""
    n_frames = int(rng.integers(1, max_frames + 1))
    n_gt = int(rng.integers(0, max_ids + 1))
    n_pred = int(rng.integers(0, max_ids + 1))
    gt, pred = {}, {}
    for f in range(1, n_frames + 1):
        for g in range(1, n_gt + 1):
            if rng.random() < 0.8:
                gt[f, g] = Box(*rng.uniform([0, 0, 8, 8], [24, 24, 14, 14]))
        here = [g for g in range(1, n_gt + 1) if (f, g) in gt]
        for p in range(1, n_pred + 1):
            if rng.random() < 0.2:
                continue
            if here and rng.random() < 0.8:
                src = gt[f, here[int(rng.integers(len(here)))]]
                j = rng.normal(0, 1.5, 4)
                pred[f, p] = Box(src.x + j[0], src.y + j[1], max(src.w + j[2], 1.0), max(src.h + j[3], 1.0))
            else:
                pred[f, p] = Box(*rng.uniform([0, 0, 8, 8], [24, 24, 14, 14]))
    return gt, pred
