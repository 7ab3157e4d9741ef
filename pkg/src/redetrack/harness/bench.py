"""Per-frame latency of the tracker across object-count buckets."""
from __future__ import annotations

import dataclasses
import json
import time

import numpy as np

from ..anchors import build_grid
from ..detector import SyntheticBackend
from ..linker import EmbeddingProvider
from ..simulator import generate
from .config import RunConfig
from .pipeline import run_tracker


def _summary(seconds: np.ndarray) -> dict:
    ms = seconds * 1e3
    if ms.size == 0:
        return {"mean_ms": 0.0, "median_ms": 0.0, "p95_ms": 0.0}
    return {
        "mean_ms": float(ms.mean()),
        "median_ms": float(np.median(ms)),
        "p95_ms": float(np.percentile(ms, 95)),
    }


def run_bench(cfg: RunConfig, clock=time.perf_counter) -> dict:
    """Track one synthetic scene per bucket; the first ``warmup`` frames are not timed.

    Generator time covers redetection, merging and spawning; total time adds
    the linker. Counts (queries, births, terminations) are deterministic;
    everything under ``timing`` is wall-clock.
    """
    b = cfg.bench
    b.validate()
    grid_cfg = dataclasses.replace(cfg.grid, frame_w=b.frame_w, frame_h=b.frame_h)
    grid = build_grid(grid_cfg)
    K = cfg.generator.anchors_per_tracklet
    buckets = []
    for n in b.buckets:
        scene_cfg = dataclasses.replace(
            cfg.scene, n_objects=n, frames=b.frames, frame_w=b.frame_w, frame_h=b.frame_h,
            size_min=b.size_min, size_max=b.size_max,
        )
        scene = generate(scene_cfg)
        backend = SyntheticBackend(scene, grid, cfg.oracle)
        res = run_tracker(backend, grid, 1, scene.frames, cfg.generator, cfg.linker,
                          embeddings=EmbeddingProvider.from_scene(scene), clock=clock)
        stats = res.frame_stats[b.warmup:]
        queries = [q for _, _, q, _, _ in stats]
        contract = all(q == K * a for _, a, q, _, _ in res.frame_stats[1:])
        gen_t = np.array([g for _, _, _, g, _ in stats])
        tot_t = np.array([g + l for _, _, _, g, l in stats])
        buckets.append({
            "objects": n,
            "frames_timed": len(stats),
            "queries_per_frame_min": min(queries) if queries else 0,
            "queries_per_frame_max": max(queries) if queries else 0,
            "queries_total": int(sum(queries)),
            "query_contract_holds": contract,
            "births": res.births,
            "terminations": res.terminations,
            "timing": {"generator": _summary(gen_t), "total": _summary(tot_t)},
        })
    return {
        "grid_anchors": grid.size,
        "frame_w": b.frame_w,
        "frame_h": b.frame_h,
        "K": K,
        "warmup": b.warmup,
        "buckets": buckets,
    }


def strip_timing(report: dict) -> dict:
    out = dict(report)
    out["buckets"] = [{k: v for k, v in bk.items() if k != "timing"} for bk in report["buckets"]]
    return out


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def table(report: dict) -> str:
    head = f"{'objects':>7} {'queries/frame':>13} {'gen p50 ms':>10} {'gen p95 ms':>10} {'tot p95 ms':>10} {'births':>6} {'term':>5}"
    lines = [f"grid anchors {report['grid_anchors']}, frame {report['frame_w']}x{report['frame_h']}, K={report['K']}", head]
    for bk in report["buckets"]:
        q = f"{bk['queries_per_frame_min']}-{bk['queries_per_frame_max']}"
        g, t = bk["timing"]["generator"], bk["timing"]["total"]
        lines.append(f"{bk['objects']:>7} {q:>13} {g['median_ms']:>10.3f} {g['p95_ms']:>10.3f} {t['p95_ms']:>10.3f} "
                     f"{bk['births']:>6} {bk['terminations']:>5}")
    return "\n".join(lines) + "\n"
