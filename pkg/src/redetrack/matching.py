"""Minimum-cost bipartite assignment with forbidden pairs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _core


@dataclass(frozen=True)
class Assignment:
    pairs: list[tuple[int, int]]
    unmatched_rows: list[int]
    unmatched_cols: list[int]
    cost: float

    def as_dict(self) -> dict[int, int]:
        return dict(self.pairs)


def hungarian(cost, forbidden=None, max_cost: float | None = None) -> Assignment:
    """Solve the rectangular assignment problem over permitted entries.

    An entry is forbidden when ``forbidden`` marks it, when it is not finite,
    or when it exceeds ``max_cost``. The solution first matches as many rows
    as possible using permitted entries only, then minimises the summed
    cost among those matchings.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        c = c.reshape(0, 0) if c.size == 0 else c.reshape(c.shape[0], -1)
    n, m = c.shape
    allowed = np.isfinite(c)
    if forbidden is not None:
        allowed &= ~np.asarray(forbidden, dtype=bool)
    if max_cost is not None:
        allowed &= c <= max_cost
    if n == 0 or m == 0 or not allowed.any():
        return Assignment([], list(range(n)), list(range(m)), 0.0)

    N = max(n, m)
    vals = c[allowed]
    lo = float(vals.min())
    span = float(vals.max()) - lo
    # one forbidden or padding pair costs more than all permitted pairs together
    big = (span + 1.0) * (N + 1)
    sq = np.full((N, N), big)
    sub = sq[:n, :m]
    sub[allowed] = c[allowed] - lo
    cols = _core.hungarian_square(np.ascontiguousarray(sq))
    pairs = [(r, int(cols[r])) for r in range(n) if cols[r] < m and allowed[r, cols[r]]]
    used_r = {r for r, _ in pairs}
    used_c = {k for _, k in pairs}
    total = float(sum(c[r, k] for r, k in pairs))
    return Assignment(
        pairs,
        [r for r in range(n) if r not in used_r],
        [k for k in range(m) if k not in used_c],
        total,
    )
