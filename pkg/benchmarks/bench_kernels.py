"""Time the compiled kernels against the numpy fallback on identical inputs.

    python benchmarks/bench_kernels.py [--repeat N] [--objects N] [--json PATH]

Each kernel is run on both backends; outputs are checked for equality and
the median time per call is reported.
"""
from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from redetrack import _fallback
from redetrack.anchors import GridConfig, build_grid

try:
    from redetrack import _kernels
except ImportError:
    _kernels = None


def _grid_args(g):
    return (g.strides, g.fws, g.fhs, g.offsets, g.shape_ptr, g.shapes, g.maxw, g.maxh)


def cases(n_objects: int, seed: int = 0):
    """(name, callable taking the kernel module) pairs on a 1024x1024 default grid."""
    rng = np.random.default_rng(seed)
    grid = build_grid(GridConfig(frame_w=1024, frame_h=1024))
    objs = np.ascontiguousarray(rng.uniform([0, 0, 32, 32], [960, 960, 64, 64], size=(n_objects, 4)))
    owner = np.empty(grid.size, dtype=np.int64)
    best = np.empty(grid.size)
    conf = np.empty(grid.size)
    boxes = np.empty((grid.size, 4))
    nms_boxes = np.ascontiguousarray(rng.uniform([0, 0, 10, 10], [300, 300, 60, 60], size=(300, 4)))
    order = np.argsort(-rng.random(300)).astype(np.int64)
    cost = rng.uniform(0, 1, size=(40, 40))
    prev = rng.integers(0, 255, size=(128, 128)).astype(np.uint8)
    nxt = np.roll(prev, (2, 3), axis=(0, 1))

    def dense(mod):
        mod.paint_responses(objs, *_grid_args(grid), 0.3, owner, best)
        mod.fill_dense(owner, best, objs, grid.boxes, False, 1.0, conf, boxes)
        return owner.copy(), conf.copy()

    return [
        ("topk_batch K=1", lambda mod: mod.topk_anchors_batch(objs, *_grid_args(grid), 1)),
        ("topk_batch K=10", lambda mod: mod.topk_anchors_batch(objs, *_grid_args(grid), 10)),
        ("paint+fill_dense", dense),
        ("nms 300 boxes", lambda mod: mod.nms(nms_boxes, order, 0.5)),
        ("hungarian 40x40", lambda mod: mod.hungarian_square(cost)),
        ("block_match 128x128", lambda mod: mod.block_match(prev, nxt, 8, 4, 16, 16)),
        ("keyed_normals 5000", lambda mod: mod.keyed_normals(1, 2, 3, np.arange(1000), np.arange(1000), 5)),
    ]


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def _median_call(fn, repeat: int) -> float:
    number = 1
    t = min(timeit.repeat(fn, number=1, repeat=1))
    if t < 0.02:
        number = max(1, int(0.02 / max(t, 1e-7)))
    return float(np.median(timeit.repeat(fn, number=number, repeat=repeat))) / number


def run(repeat: int, n_objects: int) -> list[dict]:
    rows = []
    for name, call in cases(n_objects):
        py = _median_call(lambda: call(_fallback), repeat)
        row = {"kernel": name, "python_ms": py * 1e3}
        if _kernels is not None:
            cy = _median_call(lambda: call(_kernels), repeat)
            row.update(cython_ms=cy * 1e3, speedup=py / cy, equal=_same(call(_fallback), call(_kernels)))
        rows.append(row)
    return rows


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--objects", type=int, default=50, help="objects / queries per call")
    p.add_argument("--json", help="also write results as JSON")
    args = p.parse_args(argv)
    rows = run(args.repeat, args.objects)
    print(f"{'kernel':<22} {'python ms':>10} {'cython ms':>10} {'speedup':>8} {'equal':>6}")
    for r in rows:
        if "cython_ms" in r:
            print(f"{r['kernel']:<22} {r['python_ms']:>10.3f} {r['cython_ms']:>10.3f} {r['speedup']:>7.1f}x {str(r['equal']):>6}")
        else:
            print(f"{r['kernel']:<22} {r['python_ms']:>10.3f} {'n/a':>10}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0 if all(r.get("equal", True) for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
