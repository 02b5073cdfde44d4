"""Fenwick-style forest of merged row summaries.

After absorbing ``u`` rows, level ``i`` holds entries 1..floor(u / 2^i);
entry ``(i, j)`` summarizes rows (j-1)*2^i + 1 .. j*2^i. Appending a row
cascades at most one merge per level, and the prefix summary for ``u``
reads exactly one entry per set bit of ``u``, so update and query both
touch O(log u) entries.

Merged entries are retained rather than popped; only the per-level tail
entries with odd index (the current tree roots) feed summaries or future
merges, which is what lets chunked training checkpoint the forest with
O(log n) state.
"""
from __future__ import annotations

from typing import Callable


class RowForest:
    """Levels of row-summary states keyed by 1-based entry index."""

    def __init__(self):
        self.levels: list[dict[int, object]] = []
        self.count = 0

    def level_size(self, i: int) -> int:
        return self.count >> i

    def get(self, i: int, j: int):
        return self.levels[i][j]

    def root_ids(self, u: int | None = None) -> list[tuple[int, int]]:
        """Summary entries for prefix ``u``, highest level (oldest rows) first."""
        if u is None:
            u = self.count
        if u != self.count:
            raise ValueError(f"forest holds {self.count} rows, queried for {u}")
        return [
            (i, u >> i)
            for i in range(u.bit_length() - 1, -1, -1)
            if (u >> i) & 1
        ]

    def live_ids(self) -> list[tuple[int, int]]:
        """Entries any future merge or summary can still read."""
        return self.root_ids()

    def prune_to_live(self) -> None:
        """Drop entries that nothing can read again (value sweeps only)."""
        keep = set(self.live_ids())
        for i, level in enumerate(self.levels):
            for j in [j for j in level if (i, j) not in keep]:
                del level[j]

    def n_entries(self) -> int:
        return sum(len(level) for level in self.levels)


def forest_update(
    forest: RowForest, g_new, merge: Callable[[object, object], object]
) -> list[tuple[int, int]]:
    """Append one row summary and cascade merges; returns created entry ids.

    A merge fires at level ``i`` whenever the newest entry index there is
    even, so at most one merge happens per level.
    """
    u = forest.count + 1
    if not forest.levels:
        forest.levels.append({})
    forest.levels[0][u] = g_new
    created = [(0, u)]
    i, j = 0, u
    while j % 2 == 0:
        merged = merge(forest.levels[i][j - 1], forest.levels[i][j])
        if len(forest.levels) <= i + 1:
            forest.levels.append({})
        forest.levels[i + 1][j // 2] = merged
        created.append((i + 1, j // 2))
        i += 1
        j //= 2
    forest.count = u
    return created


def forest_summary(forest: RowForest, u: int, n: int, ops):
    """Prefix summary state for rows 1..u of an n-node graph.

    Feeds the popcount(u) root entries to the sequence LSTM from highest
    level to lowest starting at the zero state, then shifts the hidden
    half by the positional code of the remaining row count n - u. The
    empty prefix (u = 0) is the exact zero state.
    """
    if u == 0:
        return ops.zero_state()
    state = ops.zero_state()
    for i, j in forest.root_ids(u):
        state = ops.lstm_in(forest.get(i, j), state)
    return ops.add_pe(state, n - u)
