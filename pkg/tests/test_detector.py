import numpy as np
import pytest

from redetrack.anchors import GridConfig, LevelConfig, build_grid
from redetrack.detector import RecordingBackend, SyntheticBackend, SyntheticOracleConfig, replay_backend
from redetrack.errors import ConfigError, FrameRangeError, ParseError
from redetrack.geometry import Box, iou
from redetrack.simulator import GroundTruthScene, SceneConfig, generate


def make_scene(boxes, vis=None, frames=1, W=128, H=128):
    """Static scene with the given boxes on every frame."""
    b = np.array(boxes, dtype=float).reshape(1, -1, 4).repeat(frames, axis=0)
    n = b.shape[1]
    v = np.ones((frames, n)) if vis is None else np.asarray(vis, dtype=float)
    return GroundTruthScene(frames, W, H, np.arange(1, n + 1), b, v, np.zeros((n, 0)))


@pytest.fixture(scope="module")
def grid():
    return build_grid([LevelConfig(16, 8, 8, (32.0,))], 128, 128)


def quiet(**kw):
    kw.setdefault("confidence_noise_sigma", 0.0)
    return SyntheticOracleConfig(**kw)


def test_query_zero_noise_passes_truth(grid):
    scene = make_scene([(8, 8, 32, 32)])
    be = SyntheticBackend(scene, grid, quiet())
    aid = int(np.argmax([iou(grid.anchor_box(a), Box(8, 8, 32, 32)) for a in range(len(grid))]))
    (out,) = be.query(1, [aid])
    assert out.box == Box(8, 8, 32, 32)
    assert out.confidence == iou(grid.anchor_box(aid), Box(8, 8, 32, 32))


def test_query_far_anchor_and_dropout(grid):
    scene = make_scene([(8, 8, 32, 32)])
    far = len(grid) - 1
    (out,) = SyntheticBackend(scene, grid, quiet()).query(1, [far])
    assert out.confidence == 0.0 and out.box == grid.anchor_box(far)
    be = SyntheticBackend(scene, grid, quiet(dropout_prob=1.0))
    assert all(o.confidence == 0.0 for o in be.query(1, range(len(grid))))


def test_query_is_order_independent(grid):
    scene = generate(SceneConfig(n_objects=4, frames=2, frame_w=128, frame_h=128, size_min=20, size_max=40, seed=1))
    cfg = SyntheticOracleConfig(regression_noise_sigma=1.5, confidence_noise_sigma=0.05, seed=9)
    ids = list(range(0, len(grid), 3))
    a = SyntheticBackend(scene, grid, cfg).query(2, ids)
    b = SyntheticBackend(scene, grid, cfg).query(2, ids[::-1])
    assert a == b[::-1]


def test_detect_constant_confidence(grid):
    truth = [(0, 0, 30, 30), (50, 50, 30, 30), (90, 10, 20, 30)]
    be = SyntheticBackend(make_scene(truth), grid, quiet(confidence_kind="constant"))
    dets = be.detect(1, 0.9)
    assert sorted((b.x, b.y, b.w, b.h) for b, _ in dets) == sorted(truth)
    assert all(c == 1.0 for _, c in dets)


def test_detect_skips_occluded(grid):
    be = SyntheticBackend(make_scene([(0, 0, 30, 30), (60, 60, 30, 30)], vis=[[1, 0]]), grid, quiet())
    assert [b for b, _ in be.detect(1, 0.5)] == [Box(0, 0, 30, 30)]


def test_detect_dropout_reproducible(grid):
    scene = generate(SceneConfig(n_objects=6, frames=5, frame_w=128, frame_h=128, size_min=10, size_max=20, seed=2))
    cfg = SyntheticOracleConfig(dropout_prob=0.5, seed=4)
    runs = [[SyntheticBackend(scene, grid, cfg).detect(f, 0.5) for f in range(1, 6)] for _ in range(2)]
    assert runs[0] == runs[1]
    assert 0 < sum(map(len, runs[0])) < 30


def test_detect_confidence_floor(grid):
    scene = generate(SceneConfig(n_objects=4, frames=3, frame_w=128, frame_h=128, seed=3))
    be = SyntheticBackend(scene, grid, SyntheticOracleConfig(regression_noise_sigma=3.0, seed=1))
    for f in (1, 2, 3):
        assert all(0.8 <= c <= 1.0 for _, c in be.detect(f, 0.8))


def test_regression_noise_statistics():
    sigma = 2.0
    grid = build_grid(GridConfig(frame_w=256, frame_h=256))
    scene = generate(SceneConfig(n_objects=8, frames=50, frame_w=256, frame_h=256, seed=6))
    be = SyntheticBackend(scene, grid, SyntheticOracleConfig(regression_noise_sigma=sigma, confidence_noise_sigma=0.0))
    errs = []
    for f in range(1, 51):
        for b, _ in be.detect(f, 0.0):
            d = np.abs(scene.boxes[f - 1, :, :2] - [b.x, b.y]).sum(axis=1)
            i = int(np.argmin(d))
            errs.extend(np.abs(np.array([b.x, b.y]) - scene.boxes[f - 1, i, :2]))
    expected = sigma * np.sqrt(2 / np.pi)
    assert abs(np.mean(errs) - expected) < 0.2 * expected


def test_unknown_frame(grid):
    be = SyntheticBackend(make_scene([(0, 0, 10, 10)]), grid)
    with pytest.raises(FrameRangeError):
        be.query(2, [0])


def test_bad_oracle_config(grid):
    with pytest.raises(ConfigError):
        SyntheticBackend(make_scene([(0, 0, 10, 10)]), grid, SyntheticOracleConfig(dropout_prob=1.5))


def test_record_replay_roundtrip(tmp_path, grid):
    scene = generate(SceneConfig(n_objects=3, frames=3, frame_w=128, frame_h=128, seed=8))
    cfg = SyntheticOracleConfig(regression_noise_sigma=1.0, seed=3)
    rec = RecordingBackend(SyntheticBackend(scene, grid, cfg))
    ids = list(range(0, len(grid), 2))
    live = {f: (rec.query(f, ids), rec.detect(f, 0.5)) for f in (1, 2, 3)}
    rec.write(tmp_path / "r.txt")
    rep = replay_backend(tmp_path / "r.txt", grid)
    for f, (q, d) in live.items():
        assert rep.query(f, ids) == q
        assert rep.detect(f, 0.5) == d


def test_replay_empty_and_single_row(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("")
    assert replay_backend(p).detect(1, 0.0) == []
    p.write_text("# header\nQ,1,7,0.9,1.5,2,3,4\n")
    rep = replay_backend(p)
    (o,) = rep.query(1, [7])
    assert (o.anchor_id, o.confidence, o.box) == (7, 0.9, Box(1.5, 2, 3, 4))
    assert rep.query(1, [8])[0].confidence == 0.0


@pytest.mark.parametrize("row, line", [("X,1,2", 2), ("Q,1,7,0.9,1,2,3", 2), ("D,1,1.5,0,0,1,1", 2), ("Q,a,7,0.9,1,2,3,4", 2)])
def test_replay_parse_errors(tmp_path, row, line):
    p = tmp_path / "bad.txt"
    p.write_text("D,1,0.9,0,0,1,1\n" + row + "\n")
    with pytest.raises(ParseError) as e:
        replay_backend(p)
    assert e.value.line == line
