import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from redetrack.errors import ConfigError, ContractError, DegenerateInputError
from redetrack.geometry import Box, area
from redetrack.motion import (
    FlowField,
    block_matching_flow,
    mean_flow_in_box,
    predict_flow,
    predict_identity,
    read_pgm,
    write_pgm,
)
from redetrack.simulator import SceneConfig, generate, oracle_flow

boxes = st.builds(
    Box, st.floats(-30, 90), st.floats(-30, 70), st.floats(0.5, 60), st.floats(0.5, 60)
)


@pytest.mark.parametrize("b", [(0, 0, 10, 10), (-2, 5, 3, 7), (1.5, 2.25, 0.5, 9)])
def test_identity(b):
    assert predict_identity(Box(*b)) == Box(*b)


def test_uniform_and_zero_fields():
    f = FlowField.uniform((2, 0), 64, 48, 16, 12)
    assert mean_flow_in_box(f, Box(5, 5, 20, 10)) == (2.0, 0.0)
    z = FlowField.zeros(64, 48)
    assert mean_flow_in_box(z, Box(5, 5, 20, 10)) == (0.0, 0.0)
    assert predict_flow(Box(0, 0, 10, 10), FlowField.uniform((3, -1), 64, 48)) == Box(3, -1, 10, 10)


def test_half_and_half_field():
    dx = np.zeros((8, 8))
    dx[:, :4] = 4.0
    f = FlowField(dx, np.zeros((8, 8)), 8, 8)
    assert mean_flow_in_box(f, Box(0, 0, 8, 8)) == (2.0, 0.0)
    assert mean_flow_in_box(f, Box(2, 2, 4, 4)) == (2.0, 0.0)


def test_coarse_field_scales_to_frame_units():
    # one field unit is four frame pixels
    f = FlowField(np.full((4, 4), 0.5), np.full((4, 4), -0.25), 16, 16)
    assert mean_flow_in_box(f, Box(0, 0, 16, 16)) == (2.0, -1.0)


def test_subcell_box_uses_nearest_cell():
    dx = np.arange(16, dtype=float).reshape(4, 4)
    f = FlowField(dx, np.zeros((4, 4)), 16, 16)
    # box center (9.5, 5.5) sits in cell row 1, col 2; no cell center is covered
    assert mean_flow_in_box(f, Box(9, 5, 1, 1)) == (dx[1, 2] * 4, 0.0)


def test_box_outside_frame():
    with pytest.raises(DegenerateInputError):
        mean_flow_in_box(FlowField.zeros(16, 16), Box(20, 20, 4, 4))


def test_flowfield_rejects_bad_grids():
    with pytest.raises(ContractError):
        FlowField(np.zeros((2, 2)), np.zeros((2, 3)), 4, 4)
    with pytest.raises(ContractError):
        FlowField(np.full((2, 2), np.nan), np.zeros((2, 2)), 4, 4)


@settings(deadline=None)
@given(boxes, st.floats(-4, 4))
def test_flow_properties(b, alpha):
    rng = np.random.default_rng(0)
    f = FlowField(rng.normal(size=(12, 16)), rng.normal(size=(12, 16)), 64, 48)
    try:
        m = mean_flow_in_box(f, b)
    except DegenerateInputError:
        return
    assert predict_flow(b, FlowField.zeros(64, 48, 16, 12)) == predict_identity(b)
    assert area(predict_flow(b, f)) == pytest.approx(area(b))
    ms = mean_flow_in_box(f.scaled(alpha), b)
    assert ms == pytest.approx((alpha * m[0], alpha * m[1]), abs=1e-9)


def test_oracle_flow_predicts_next_box():
    scene = generate(SceneConfig(n_objects=3, frames=6, rel_speed=0.2, seed=5, frame_w=320, frame_h=240))
    for t in range(1, 6):
        f = oracle_flow(scene, t)
        for i in range(3):
            b0 = Box(*scene.boxes[t - 1, i])
            b1 = Box(*scene.boxes[t, i])
            p = predict_flow(b0, f)
            assert p.x == pytest.approx(b1.x, abs=1e-9) and p.y == pytest.approx(b1.y, abs=1e-9)


def exhaustive_sad(prev, nxt, block, radius, step):
    """Direct SAD search per grid cell with the same tie rules."""
    H, W = prev.shape
    fw, fh = -(-W // step), -(-H // step)
    sx, sy = W / fw, H / fh
    prev = prev.astype(float)
    nxt = nxt.astype(float)
    out = np.zeros((fh, fw, 2))
    for i in range(fh):
        for j in range(fw):
            bx = int(np.floor((j + 0.5) * sx)) - block // 2
            by = int(np.floor((i + 0.5) * sy)) - block // 2
            x0, x1 = max(bx, 0), min(bx + block, W)
            y0, y1 = max(by, 0), min(by + block, H)
            best, arg = None, None
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    if x0 + dx < 0 or x1 + dx > W or y0 + dy < 0 or y1 + dy > H:
                        continue
                    s = np.abs(prev[y0:y1, x0:x1] - nxt[y0 + dy:y1 + dy, x0 + dx:x1 + dx]).sum()
                    if best is None or s < best:
                        best, arg = s, (dx, dy)
            zero = np.abs(prev[y0:y1, x0:x1] - nxt[y0:y1, x0:x1]).sum()
            out[i, j] = (0, 0) if zero <= best else arg
    return out


def _texture(seed=0, shape=(32, 32)):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=shape).astype(np.uint8)


def test_block_matching_static():
    img = _texture()
    f = block_matching_flow(img, img, block=8, radius=3, step=8)
    assert not f.dx.any() and not f.dy.any()


@pytest.mark.parametrize("t", [(3, 0), (-2, 1), (0, -3), (1, 1)])
def test_block_matching_translation(t):
    img = _texture(1)
    nxt = np.roll(img, (t[1], t[0]), axis=(0, 1))
    f = block_matching_flow(img, nxt, block=8, radius=3, step=8)
    ref = exhaustive_sad(img, nxt, 8, 3, 8)
    # field values are stored in field units; one cell spans sx frame pixels
    sx, sy = f.scale
    px, py = f.dx * sx, f.dy * sy
    assert np.array_equal(px, ref[..., 0]) and np.array_equal(py, ref[..., 1])
    # interior cells see the true shift
    assert np.all(px[1:-1, 1:-1] == t[0]) and np.all(py[1:-1, 1:-1] == t[1])


def test_block_matching_noise_bounded():
    f = block_matching_flow(_texture(2), _texture(3), block=6, radius=2, step=8)
    sx, sy = f.scale
    assert np.abs(f.dx * sx).max() <= 2 and np.abs(f.dy * sy).max() <= 2


def test_block_matching_rejects():
    with pytest.raises(ConfigError):
        block_matching_flow(np.zeros((4, 4)), np.zeros((4, 4)), block=8)
    with pytest.raises(ContractError):
        block_matching_flow(np.zeros((8, 8)), np.zeros((8, 9)))


def test_pgm_roundtrip(tmp_path):
    img = _texture(4, (5, 7))
    write_pgm(tmp_path / "a.pgm", img)
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), img)
