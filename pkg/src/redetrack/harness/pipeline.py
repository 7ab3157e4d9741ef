"""The two-stage online pipeline: tracklet generation followed by linking."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from ..anchors import AnchorGrid
from ..detector import DetectorBackend
from ..generator import GeneratorConfig, TrackletGenerator
from ..geometry import Box
from ..linker import EmbeddingProvider, LinkConfig, Linker
from ..motion import FlowProvider


@dataclass
class TrackResult:
    # (frame, output id, box, confidence), sorted by (frame, id)
    rows: list[tuple[int, int, Box, float]] = field(default_factory=list)
    births: int = 0
    terminations: int = 0
    fallbacks: int = 0
    # per frame: (frame, active tracklets at step entry, anchors queried, generator seconds, linker seconds)
    frame_stats: list[tuple[int, int, int, float, float]] = field(default_factory=list)

    def ids(self) -> set[int]:
        return {r[1] for r in self.rows}


def run_tracker(backend: DetectorBackend, grid: AnchorGrid, first: int, last: int,
                gen_cfg: GeneratorConfig | None = None, link_cfg: LinkConfig | None = None,
                motion: FlowProvider | None = None, embeddings: EmbeddingProvider | None = None,
                clock=time.perf_counter) -> TrackResult:
    """Track frames ``first..last`` in order.

    With linking enabled, output ids are track ids; otherwise tracklet ids.
    Terminations of a frame reach the linker before that frame's new
    tracklets are observed, so an object lost and re-detected in the same
    frame can rejoin its track.
    """
    link_cfg = link_cfg or LinkConfig()
    link_on = link_cfg.enabled and last >= first
    if link_on and embeddings is None:
        raise ValueError("linking needs an embedding provider")
    gen = TrackletGenerator(backend, grid, gen_cfg, motion)
    linker = Linker(link_cfg) if link_on else None
    out = TrackResult()
    for f in range(first, last + 1):
        n_active = len(gen.active())
        t0 = clock()
        res = gen.init(f) if f == first else gen.step(f)
        t1 = clock()
        ids = {}
        if linker is not None:
            for tid in res.terminated:
                linker.on_tracklet_terminated(tid, f)
            embs = embeddings.embed_many(f, [b for _, b, _ in res.born], [t for t, _, _ in res.born])
            linker.observe([(tid, e) for (tid, _, _), e in zip(res.born, embs)], f)
            cad = link_cfg.embedding_cadence
            if cad > 0:
                # each tracklet refreshes every `cad` frames, phase-shifted by id to spread the load
                due = [(tid, box) for tid, box, _ in res.extended
                       if (f - gen.tracklets[tid].birth_frame + tid) % cad == 0]
                if due:
                    embs = embeddings.embed_many(f, [b for _, b in due], [t for t, _ in due])
                    for (tid, _), e in zip(due, embs):
                        linker.refresh(tid, e)
            ids = {tid: linker.track_of[tid] for tid, _, _ in res.extended + res.born}
        t2 = clock()
        frame_rows = [(f, ids.get(tid, tid), box, conf) for tid, box, conf in res.extended + res.born]
        frame_rows.sort(key=lambda r: r[1])
        out.rows.extend(frame_rows)
        out.births += len(res.born)
        out.terminations += len(res.terminated)
        out.fallbacks += len(res.fallback)
        out.frame_stats.append((f, n_active, res.queries, t1 - t0, t2 - t1))
    return out
