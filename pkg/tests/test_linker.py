import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from redetrack.errors import ConfigError, ContractError
from redetrack.geometry import Box
from redetrack.linker import AWAITING, LINKED, EmbeddingProvider, LinkConfig, Linker, hungarian, normalize
from redetrack.simulator import SceneConfig, generate
from oracles import brute_assignment


@pytest.mark.parametrize(
    "cost, pairs, total",
    [
        ([[1, 2], [2, 1]], [(0, 0), (1, 1)], 2.0),
        ([[5]], [(0, 0)], 5.0),
        ([[4, 1, 3], [2, 0, 5]], [(0, 1), (1, 0)], 3.0),
        ([[1], [0], [3]], [(1, 0)], 0.0),
    ],
)
def test_hungarian_examples(cost, pairs, total):
    a = hungarian(np.array(cost, dtype=float))
    assert a.pairs == pairs and a.cost == total


def test_hungarian_all_forbidden_and_empty():
    a = hungarian(np.ones((2, 3)), forbidden=np.ones((2, 3), dtype=bool))
    assert a.pairs == [] and a.unmatched_rows == [0, 1] and a.unmatched_cols == [0, 1, 2]
    assert hungarian(np.zeros((0, 4))).pairs == []


def test_hungarian_prefers_more_pairs():
    # the cheap pair (0, 0) would block row 1, whose only permitted column is 0
    c = np.array([[0.0, 10.0], [1.0, np.inf]])
    assert hungarian(c).pairs == [(0, 1), (1, 0)]
    assert hungarian(c, max_cost=5.0).pairs == [(0, 0)]


costs = st.integers(1, 5).flatmap(
    lambda n: st.integers(1, 5).flatmap(
        lambda m: st.tuples(
            arrays(np.float64, (n, m), elements=st.integers(0, 6).map(float)),
            arrays(np.bool_, (n, m)),
        )
    )
)


@settings(max_examples=200, deadline=None)
@given(costs)
def test_hungarian_matches_brute_force(data):
    c, forb = data
    a = hungarian(c, forbidden=forb)
    pairs, total = brute_assignment(c, ~forb)
    assert len(a.pairs) == len(pairs)
    assert a.cost == total
    assert all(not forb[r, k] for r, k in a.pairs)


def unit(d, i):
    v = np.zeros(d)
    v[i] = 1.0
    return v


def test_observe_new_tracks():
    lk = Linker()
    assert lk.observe([(1, unit(4, 0)), (2, unit(4, 1))], 1) == {1: 1, 2: 2}


def test_resume_after_termination():
    lk = Linker()
    e = unit(4, 0)
    lk.observe([(1, e)], 1)
    lk.on_tracklet_terminated(1, 5)
    assert lk.tracks[1].state == AWAITING
    assert lk.observe([(7, e)], 9) == {7: 1}
    assert lk.tracks[1].state == LINKED and lk.tracks[1].member_tracklets == [1, 7]
    np.testing.assert_array_equal(lk.tracks[1].bank_embedding, e)


def test_opposite_embedding_gated():
    lk = Linker()
    e = unit(4, 2)
    lk.observe([(1, e)], 1)
    lk.on_tracklet_terminated(1, 2)
    assert lk.observe([(2, -e)], 3) == {2: 2}


def test_linked_track_not_matched():
    lk = Linker()
    lk.observe([(1, unit(3, 0))], 1)
    assert lk.observe([(2, unit(3, 0))], 2) == {2: 2}


def test_terminate_guards():
    lk = Linker()
    lk.observe([(1, unit(3, 0))], 1)
    with pytest.raises(ContractError):
        lk.on_tracklet_terminated(99, 2)
    lk.on_tracklet_terminated(1, 2)
    lk.on_tracklet_terminated(1, 3)
    assert lk.tracks[1].state == AWAITING


def test_observe_contract():
    lk = Linker()
    with pytest.raises(ContractError):
        lk.observe([(1, unit(3, 0)), (1, unit(3, 1))], 1)
    lk.observe([(1, unit(3, 0))], 1)
    with pytest.raises(ContractError):
        lk.observe([(1, unit(3, 0))], 2)


def test_batch_matching_is_global():
    # greedy on tracklet 10 would take track 1 and leave tracklet 11 unmatched
    lk = Linker(LinkConfig(distance_threshold=0.5))
    a = normalize([1.0, 0.0])
    b = normalize([np.cos(0.3), np.sin(0.3)])
    lk.observe([(1, a), (2, b)], 1)
    lk.on_tracklet_terminated(1, 2)
    lk.on_tracklet_terminated(2, 2)
    x = normalize([np.cos(0.15), np.sin(0.15)])
    y = normalize([np.cos(-0.2), np.sin(-0.2)])
    assert lk.observe([(10, x), (11, y)], 3) == {10: 2, 11: 1}


@given(st.integers(1, 50))
def test_bank_stays_exact_on_repeats(n):
    e = normalize(np.arange(1.0, 6.0))
    lk = Linker()
    lk.observe([(1, e)], 1)
    for _ in range(n):
        lk.refresh(1, e)
    np.testing.assert_array_equal(lk.tracks[1].bank_embedding, e)
    assert lk.tracks[1].sample_count == n + 1


@given(arrays(np.float64, 6, elements=st.floats(-10, 10)).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_normalize_unit(v):
    assert np.linalg.norm(normalize(v)) == pytest.approx(1.0)


def test_bad_config_and_zero_vector():
    with pytest.raises(ConfigError):
        Linker(LinkConfig(distance_threshold=0.0))
    with pytest.raises(ContractError):
        normalize(np.zeros(3))


def test_track_ids_monotone():
    lk = Linker()
    seen = []
    for f in range(1, 6):
        m = lk.observe([(f, -unit(5, f - 1) if f % 2 else unit(5, f - 1))], f)
        seen.append(m[f])
    assert seen == sorted(seen) == [1, 2, 3, 4, 5]


def test_embedding_provider_from_scene():
    scene = generate(SceneConfig(n_objects=3, frames=4, seed=2))
    prov = EmbeddingProvider.from_scene(scene)
    b = Box(*scene.boxes[1, 2])
    np.testing.assert_array_equal(prov.embed(2, b, 42), scene.embedding(3, 2))
    far = Box(-500, -500, 5, 5)
    r1 = prov.embed(2, far, 42)
    assert np.linalg.norm(r1) == pytest.approx(1.0)
    np.testing.assert_array_equal(r1, prov.embed(2, far, 42))
    assert not np.array_equal(r1, prov.embed(2, far, 43))


def test_embedding_provider_from_table():
    table = {(1, 5): unit(3, 1)}
    prov = EmbeddingProvider.from_table(table)
    np.testing.assert_array_equal(prov.embed(1, Box(0, 0, 1, 1), 5), unit(3, 1))
    assert prov.embed(2, Box(0, 0, 1, 1), 5).shape == (3,)
