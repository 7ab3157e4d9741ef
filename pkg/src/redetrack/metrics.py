"""CLEAR-style and identity-level tracking metrics.

Per frame, ground-truth and predicted boxes are paired one-to-one at IoU
at or above a gate. Pairs from the previous frame are kept while they stay
above the gate; the rest are solved as an assignment on ``1 - IoU``.
Identity metrics use one global gt-to-prediction matching that maximizes
the number of frames in which the paired boxes overlap above the gate.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError, ContractError
from .geometry import Box, boxes_to_array, iou_matrix
from .matching import hungarian


class TrajectorySet:
    """Boxes keyed by (frame, id), at most one per key."""

    def __init__(self, entries: Mapping[tuple[int, int], Box] | None = None):
        self._by_frame: dict[int, dict[int, Box]] = {}
        self._n = 0
        for (f, i), b in (entries or {}).items():
            self.add(f, i, b)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[int, int, float, float, float, float]]) -> "TrajectorySet":
        ts = cls()
        for f, i, x, y, w, h in rows:
            ts.add(int(f), int(i), Box(float(x), float(y), float(w), float(h)))
        return ts

    def add(self, frame_id: int, entity_id: int, box: Box) -> None:
        per = self._by_frame.setdefault(frame_id, {})
        if entity_id in per:
            raise ContractError(f"duplicate box for id {entity_id} in frame {frame_id}")
        per[entity_id] = box
        self._n += 1

    def __len__(self) -> int:
        return self._n

    def frames(self) -> list[int]:
        return sorted(f for f, per in self._by_frame.items() if per)

    def ids(self) -> list[int]:
        return sorted({i for per in self._by_frame.values() for i in per})

    def at(self, frame_id: int) -> dict[int, Box]:
        return self._by_frame.get(frame_id, {})

    def entries(self) -> dict[tuple[int, int], Box]:
        return {(f, i): b for f in self.frames() for i, b in sorted(self._by_frame[f].items())}

    def relabel(self, mapping: Mapping[int, int]) -> "TrajectorySet":
        return TrajectorySet({(f, mapping[i]): b for (f, i), b in self.entries().items()})


@dataclass(frozen=True)
class MetricsReport:
    mota: float
    idf1: float
    id_precision: float
    id_recall: float
    precision: float
    recall: float
    f1: float
    id_switches: int
    transfers: int
    fragments: int
    fp: int
    fn: int
    matches: int
    idtp: int
    num_gt: int
    num_pred: int
    gt_ids: int
    pred_ids: int
    frames: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        d = self.to_dict()
        width = max(len(k) for k in d)
        lines = []
        for k, v in d.items():
            lines.append(f"{k:<{width}}  {v:.6f}" if isinstance(v, float) else f"{k:<{width}}  {v}")
        return "\n".join(lines) + "\n"


def _ratio(num: int, den: int, both_empty: bool) -> float:
    if den == 0:
        return 1.0 if both_empty else 0.0
    return num / den


def _frame_iou(g: dict[int, Box], p: dict[int, Box]):
    gids, pids = sorted(g), sorted(p)
    if not gids or not pids:
        return gids, pids, np.zeros((len(gids), len(pids)))
    return gids, pids, iou_matrix(boxes_to_array([g[i] for i in gids]), boxes_to_array([p[i] for i in pids]))


def _check_gate(iou_gate: float) -> None:
    if not 0.0 < iou_gate <= 1.0:
        raise ConfigError(f"iou_gate must lie in (0, 1], got {iou_gate}")


def frame_matches(gt: TrajectorySet, pred: TrajectorySet, iou_gate: float = 0.5) -> dict[int, dict[int, int]]:
    """Per-frame gt id -> pred id pairing used by the CLEAR counts."""
    _check_gate(iou_gate)
    out: dict[int, dict[int, int]] = {}
    prev: dict[int, int] = {}
    for f in sorted(set(gt.frames()) | set(pred.frames())):
        gids, pids, ov = _frame_iou(gt.at(f), pred.at(f))
        gpos = {g: k for k, g in enumerate(gids)}
        ppos = {p: k for k, p in enumerate(pids)}
        cur: dict[int, int] = {}
        for g, p in prev.items():
            if g in gpos and p in ppos and ov[gpos[g], ppos[p]] >= iou_gate:
                cur[g] = p
        rg = [g for g in gids if g not in cur]
        taken = set(cur.values())
        rp = [p for p in pids if p not in taken]
        if rg and rp:
            sub = ov[np.ix_([gpos[g] for g in rg], [ppos[p] for p in rp])]
            a = hungarian(1.0 - sub, forbidden=sub < iou_gate)
            for r, c in a.pairs:
                cur[rg[r]] = rp[c]
        out[f] = cur
        prev = cur
    return out


def match_identities_global(gt: TrajectorySet, pred: TrajectorySet, iou_gate: float = 0.5) -> tuple[dict[int, int], int]:
    """Identity map gt id -> pred id maximizing gated overlap frames, and its total (IDTP).

    Among optimal maps the one with the smallest sum of matched prediction
    ranks is returned, so ties go to lower prediction ids.
    """
    _check_gate(iou_gate)
    gids, pids = gt.ids(), pred.ids()
    if not gids or not pids:
        return {}, 0
    gi = {g: k for k, g in enumerate(gids)}
    pi = {p: k for k, p in enumerate(pids)}
    count = np.zeros((len(gids), len(pids)), dtype=np.int64)
    for f in gt.frames():
        fg, fp, ov = _frame_iou(gt.at(f), pred.at(f))
        if not fp:
            continue
        r, c = np.nonzero(ov >= iou_gate)
        for a, b in zip(r, c):
            count[gi[fg[a]], pi[fp[b]]] += 1
    m = len(pids)
    scale = m * m + 1
    rank = np.broadcast_to(np.arange(m, dtype=np.int64), count.shape)
    cost = np.where(count > 0, -count * scale + rank, 0).astype(np.float64)
    a = hungarian(cost)
    mapping = {gids[r]: pids[c] for r, c in a.pairs if count[r, c] > 0}
    idtp = int(sum(count[gi[g], pi[p]] for g, p in mapping.items()))
    return mapping, idtp


def evaluate(gt: TrajectorySet, pred: TrajectorySet, iou_gate: float = 0.5) -> MetricsReport:
    _check_gate(iou_gate)
    per_frame = frame_matches(gt, pred, iou_gate)
    last_pred: dict[int, int] = {}
    last_gt: dict[int, int] = {}
    # gt ids matched before and then missed while present
    broken: set[int] = set()
    switches = transfers = fragments = matches = fp = fn = 0
    for f in sorted(per_frame):
        cur = per_frame[f]
        g_here, p_here = gt.at(f), pred.at(f)
        matches += len(cur)
        fn += len(g_here) - len(cur)
        fp += len(p_here) - len(cur)
        for g, p in cur.items():
            if g in last_pred and last_pred[g] != p:
                switches += 1
            if p in last_gt and last_gt[p] != g:
                transfers += 1
            if g in broken:
                fragments += 1
                broken.discard(g)
            last_pred[g] = p
            last_gt[p] = g
        for g in g_here:
            if g not in cur and g in last_pred:
                broken.add(g)

    n_gt, n_pred = len(gt), len(pred)
    empty = n_gt == 0 and n_pred == 0
    if n_gt:
        mota = 1.0 - (fn + fp + switches) / n_gt
    else:
        mota = 1.0 if fp == 0 else 0.0
    _, idtp = match_identities_global(gt, pred, iou_gate)
    precision = _ratio(matches, n_pred, empty)
    recall = _ratio(matches, n_gt, empty)
    return MetricsReport(
        mota=mota,
        idf1=_ratio(2 * idtp, n_gt + n_pred, empty),
        id_precision=_ratio(idtp, n_pred, empty),
        id_recall=_ratio(idtp, n_gt, empty),
        precision=precision,
        recall=recall,
        f1=_ratio(2 * matches, n_gt + n_pred, empty),
        id_switches=switches,
        transfers=transfers,
        fragments=fragments,
        fp=fp,
        fn=fn,
        matches=matches,
        idtp=idtp,
        num_gt=n_gt,
        num_pred=n_pred,
        gt_ids=len(gt.ids()),
        pred_ids=len(pred.ids()),
        frames=len(per_frame),
    )
