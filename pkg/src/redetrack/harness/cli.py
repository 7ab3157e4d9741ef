"""Command line entry point: simulate, track, eval, bench.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .. import _core
from ..anchors import build_grid
from ..detector import RecordingBackend, SyntheticBackend, replay_backend
from ..errors import ConfigError, ContractError, DegenerateInputError, FrameRangeError, ParseError, SequencingError
from ..linker import EmbeddingProvider
from ..metrics import evaluate
from ..motion import BlockMatchingFlow, write_pgm
from ..simulator import OracleFlow, generate, render_raster
from . import bench as bench_mod
from . import config as config_mod
from . import io

log = logging.getLogger("redetrack")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_arg_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="redetrack", description="Tracking by redetection on a single-shot anchor grid.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", type=Path, help="key=value config file")
        sp.add_argument("-o", "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
        sp.add_argument("--seed", type=int, help="override the random seed")

    sp = sub.add_parser("simulate", help="write a synthetic ground-truth scene")
    common(sp)
    sp.add_argument("--out", type=Path, required=True, help="output directory")
    sp.add_argument("--rasters", action="store_true", help="also write one PGM raster per frame")
    sp.add_argument("--no-embeddings", action="store_true", help="skip the embedding sidecar")

    sp = sub.add_parser("track", help="run the tracker and write MOTChallenge results")
    common(sp)
    sp.add_argument("--scene", type=Path, help="directory written by simulate")
    sp.add_argument("--embeddings", type=Path, help="embedding sidecar (default: <scene>/embeddings.txt)")
    sp.add_argument("--frames", type=int, help="last frame to track (replay without a scene)")
    sp.add_argument("--out", type=Path, required=True, help="results file")
    sp.add_argument("--record", type=Path, help="also write the backend's answers in the replay format")
    sp.add_argument("--summary", type=Path, help="write run counts as JSON")

    sp = sub.add_parser("eval", help="score results against ground truth")
    sp.add_argument("--gt", type=Path, required=True)
    sp.add_argument("--results", type=Path, required=True)
    sp.add_argument("--gate", type=float, default=0.5, help="IoU gate (default 0.5)")
    sp.add_argument("--json", type=Path, help="write the report as JSON")

    sp = sub.add_parser("bench", help="per-frame latency across object counts")
    common(sp)
    sp.add_argument("--json", type=Path, help="write the report as JSON")
    return p


def _load_config(args, seed_keys):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides += [f"{k}={args.seed}" for k in seed_keys]
    cfg = config_mod.load(args.config, overrides)
    cfg.validate()
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load_config(args, ["scene.seed"])
    scene = generate(cfg.scene)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    io.write_gt(out / "gt.txt", scene.rows())
    manifest = {
        "seed": cfg.scene.seed,
        "config_sha256": cfg.digest("scene"),
        "frames": scene.frames,
        "frame_w": scene.frame_w,
        "frame_h": scene.frame_h,
        "ids": [int(i) for i in scene.ids],
        "events": [dataclasses.asdict(e) for e in scene.events],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (out / "scene.cfg").write_text(cfg.section_text("scene"))
    if not args.no_embeddings:
        io.write_embeddings(out / "embeddings.txt", io.scene_table(scene))
    if args.rasters:
        rdir = out / "rasters"
        rdir.mkdir(exist_ok=True)
        for t in range(1, scene.frames + 1):
            write_pgm(rdir / f"{t:06d}.pgm", render_raster(scene, t))
    log.info("wrote %d frames, %d identities to %s", scene.frames, len(scene.ids), out)
    return EXIT_OK


def cmd_track(args) -> int:
    from .pipeline import run_tracker

    cfg = _load_config(args, ["oracle.seed"])
    scene = io.load_scene(args.scene) if args.scene is not None else None
    if scene is not None:
        W, H, last = scene.frame_w, scene.frame_h, scene.frames
    else:
        if cfg.backend.kind != "replay":
            raise UsageError("--scene is required for the synthetic backend")
        if args.frames is None:
            raise UsageError("--frames is required when tracking a replay without --scene")
        W, H, last = cfg.grid.frame_w, cfg.grid.frame_h, args.frames
    grid = build_grid(dataclasses.replace(cfg.grid, frame_w=W, frame_h=H))

    if cfg.backend.kind == "synthetic":
        backend = SyntheticBackend(scene, grid, cfg.oracle)
    else:
        backend = replay_backend(cfg.backend.replay_path, grid)
    if args.record is not None:
        backend = RecordingBackend(backend)

    motion = None
    if cfg.motion.kind == "oracle":
        if scene is None:
            raise UsageError("motion.kind=oracle needs --scene")
        motion = OracleFlow(scene)
    elif cfg.motion.kind == "block":
        if scene is None:
            raise UsageError("motion.kind=block needs --scene")
        motion = BlockMatchingFlow(lambda t: render_raster(scene, t), cfg.motion.block, cfg.motion.radius, cfg.motion.step)

    embeddings = None
    if cfg.linker.enabled:
        emb_path = args.embeddings or (args.scene / "embeddings.txt" if args.scene is not None else None)
        if emb_path is not None and emb_path.exists():
            embeddings = EmbeddingProvider.from_table(io.read_embeddings(emb_path), scene)
        else:
            log.warning("no embeddings found; every new tracklet starts its own track")
            embeddings = EmbeddingProvider(lambda f, k: None, None, seed=cfg.oracle.seed)

    res = run_tracker(backend, grid, 1, last, cfg.generator, cfg.linker, motion, embeddings)
    io.write_results(args.out, res.rows)
    if args.record is not None:
        backend.write(args.record)
    summary = {
        "frames": last,
        "rows": len(res.rows),
        "ids": len(res.ids()),
        "births": res.births,
        "terminations": res.terminations,
        "fallbacks": res.fallbacks,
        "queries": sum(q for _, _, q, _, _ in res.frame_stats),
    }
    if args.summary is not None:
        args.summary.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    log.info("tracked %d frames: %s", last, summary)
    return EXIT_OK


def cmd_eval(args) -> int:
    if not 0.0 < args.gate <= 1.0:
        raise ConfigError(f"--gate must lie in (0, 1], got {args.gate}")
    gt = io.trajectories(io.read_gt(args.gt), min_visibility=0.0)
    pred = io.trajectories(io.read_results(args.results))
    report = evaluate(gt, pred, args.gate)
    sys.stdout.write(report.table())
    if args.json is not None:
        args.json.write_text(report.to_json())
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _load_config(args, ["scene.seed", "oracle.seed"])
    report = bench_mod.run_bench(cfg)
    sys.stdout.write(bench_mod.table(report))
    if args.json is not None:
        args.json.write_text(bench_mod.to_json(report))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "track": cmd_track, "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None) -> int:
    try:
        args = build_arg_parser().parse_args(argv)
    except SystemExit as e:
        # usage errors and --help return their code instead of exiting the caller
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.debug("kernel backend: %s", _core.BACKEND)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as e:
        print(f"redetrack {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ContractError, DegenerateInputError, FrameRangeError, SequencingError, OSError) as e:
        print(f"redetrack {args.command}: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
