import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from redetrack.errors import ConfigError, ContractError
from redetrack.geometry import Box
from redetrack.metrics import TrajectorySet, evaluate, frame_matches, match_identities_global
from oracles import brute_metrics, random_instance

A = [Box(0, 0, 10, 10), Box(1, 0, 10, 10), Box(2, 0, 10, 10), Box(3, 0, 10, 10)]
B = [Box(50, 0, 10, 10), Box(51, 0, 10, 10), Box(52, 0, 10, 10), Box(53, 0, 10, 10)]


def swap_instance():
    gt = TrajectorySet({(f + 1, 1): A[f] for f in range(4)} | {(f + 1, 2): B[f] for f in range(4)})
    pred = TrajectorySet()
    for f in range(4):
        first, second = (A[f], B[f]) if f < 2 else (B[f], A[f])
        pred.add(f + 1, 1, first)
        pred.add(f + 1, 2, second)
    return gt, pred


def test_perfect_prediction():
    gt, _ = swap_instance()
    r = evaluate(gt, gt)
    assert (r.mota, r.idf1, r.id_switches, r.transfers, r.fp, r.fn) == (1.0, 1.0, 0, 0, 0, 0)


def test_swap_instance():
    r = evaluate(*swap_instance())
    assert r.id_switches == 2 and r.transfers == 2
    assert r.mota == 0.75 and r.idf1 == 0.5
    assert r.fp == r.fn == 0 and r.fragments == 0


def test_empty_prediction():
    gt, _ = swap_instance()
    r = evaluate(gt, TrajectorySet())
    assert (r.recall, r.precision, r.mota, r.fn) == (0.0, 0.0, 0.0, 8)


def test_both_empty():
    r = evaluate(TrajectorySet(), TrajectorySet())
    assert (r.mota, r.idf1, r.precision, r.recall, r.f1) == (1.0,) * 5


def test_fragment_counted_once():
    gt = TrajectorySet({(f, 1): A[0] for f in range(1, 6)})
    pred = TrajectorySet({(f, 9): A[0] for f in (1, 2, 4, 5)})
    r = evaluate(gt, pred)
    assert (r.fragments, r.fn, r.id_switches) == (1, 1, 0)


def test_carry_over_keeps_previous_pair():
    g = Box(0, 0, 10, 10)
    gt = TrajectorySet({(1, 1): g, (2, 1): g})
    # frame 2: pred 2 fits better, but pred 1 is still above the gate
    pred = TrajectorySet({(1, 1): Box(2, 0, 10, 10), (2, 1): Box(2, 0, 10, 10), (2, 2): g})
    assert frame_matches(gt, pred)[2] == {1: 1}
    assert evaluate(gt, pred).id_switches == 0


@pytest.mark.parametrize(
    "pred_frames, expected",
    [
        ({5: range(1, 7)}, ({1: 5}, 6)),
        ({7: (1, 2, 3), 4: (4, 5, 6)}, ({1: 4}, 3)),
        ({3: (1, 2), 8: (3, 4, 5, 6)}, ({1: 8}, 4)),
    ],
)
def test_global_identity_match(pred_frames, expected):
    gt = TrajectorySet({(f, 1): A[0] for f in range(1, 7)})
    pred = TrajectorySet({(f, p): A[0] for p, fs in pred_frames.items() for f in fs})
    assert match_identities_global(gt, pred) == expected


def test_global_identity_disjoint():
    gt = TrajectorySet({(1, 1): A[0]})
    pred = TrajectorySet({(1, 1): B[0]})
    assert match_identities_global(gt, pred) == ({}, 0)


@pytest.mark.parametrize("gate", [0.0, -0.1, 1.5])
def test_bad_gate(gate):
    with pytest.raises(ConfigError):
        evaluate(TrajectorySet(), TrajectorySet(), gate)


def test_duplicate_entry():
    ts = TrajectorySet()
    ts.add(1, 1, A[0])
    with pytest.raises(ContractError):
        ts.add(1, 1, A[1])


def test_report_serialisation():
    r = evaluate(*swap_instance())
    assert '"mota": 0.75' in r.to_json()
    assert "id_switches" in r.table()


def test_brute_force_reference():
    rng = np.random.default_rng(12)
    keys = ("fp", "fn", "id_switches", "transfers", "fragments", "matches", "idtp", "mota", "idf1")
    for _ in range(150):
        gt, pred = random_instance(rng)
        r = evaluate(TrajectorySet(gt), TrajectorySet(pred)).to_dict()
        ref = brute_metrics(gt, pred)
        assert {k: r[k] for k in keys} == ref


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.permutations([11, 12, 13, 14]))
def test_relabel_invariance(seed, names):
    gt, pred = random_instance(np.random.default_rng(seed))
    a = evaluate(TrajectorySet(gt), TrajectorySet(pred))
    mapping = {i: names[i - 1] for i in range(1, 4)}
    b = evaluate(TrajectorySet(gt), TrajectorySet(pred).relabel(mapping))
    assert (a.mota, a.idf1, a.fp, a.fn) == (b.mota, b.idf1, b.fp, b.fn)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_self_evaluation_is_perfect(seed):
    gt, _ = random_instance(np.random.default_rng(seed))
    r = evaluate(TrajectorySet(gt), TrajectorySet(gt))
    assert (r.mota, r.idf1, r.id_switches, r.transfers) == (1.0, 1.0, 0, 0)


@given(st.integers(0, 2**32 - 1))
def test_constant_matching_has_no_switches(seed):
    rng = np.random.default_rng(seed)
    gt = {}
    for f in range(1, 6):
        for g in range(1, 4):
            gt[f, g] = Box(30.0 * g, 0, 10, 10)
    pred = {(f, g + 10): Box(b.x + rng.uniform(-1, 1), b.y, b.w, b.h) for (f, g), b in gt.items()}
    r = evaluate(TrajectorySet(gt), TrajectorySet(pred))
    assert r.id_switches == 0 and r.transfers == 0
