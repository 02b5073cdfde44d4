"""Sublinear-memory gradients by chunked recomputation.

Rows are split into k contiguous chunks. The value-only forward sweep
keeps nothing per row; at each chunk boundary it stores only the messages
later chunks can still read: the O(log n) live prefix-forest entries plus
the boundary row summary. The backward sweep then re-runs one chunk at a
time on a recording tape, seeding each chunk's recomputed states with the
gradients collected from later chunks.

Stored state is therefore O(k log n) boundary messages plus one chunk's
tape of O(m/k) tree states; balancing the two at k = sqrt(m / log2 n)
gives the sublinear peak. Gradients match the full-memory sweep up to
float reassociation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cells import OpCounter, StatePair, Tape
from .edge_tree import row_log_likelihood
from .engine import TapeOps, ValueOps
from .graphs import Graph
from .row_forest import RowForest, forest_summary, forest_update


def choose_k(n: int, m: int) -> int:
    """Chunk count balancing boundary storage against per-chunk tape size."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be positive")
    if n < 2:
        return 1
    k = int(round(math.sqrt(m / math.log2(n))))
    return max(1, min(k, n))


@dataclass
class ChunkReport:
    """Instrumented accounting of one chunked backward pass."""

    k: int
    total: float
    boundary_pairs: int
    chunk_pair_rows: list[int] = field(default_factory=list)
    peak_live_pairs: int = 0


def _chunk_bounds(n: int, k: int) -> list[tuple[int, int]]:
    """Split rows 1..n into k contiguous (start, end) ranges."""
    base, extra = divmod(n, k)
    bounds = []
    start = 1
    for c in range(k):
        size = base + (1 if c < extra else 0)
        bounds.append((start, start + size - 1))
        start += size
    return bounds


def chunked_backprop(
    model,
    g: Graph,
    k: int,
    counter: OpCounter | None = None,
) -> tuple[float, ChunkReport]:
    """Gradients of the graph log-likelihood with chunked recomputation.

    Accumulates d(total)/d(theta) into the parameter gradient buffers and
    reports the peak number of simultaneously live StatePairs.
    """
    if not 1 <= k <= g.n:
        raise ValueError(f"chunk count {k} out of range 1..{g.n}")
    cfg = model.config
    bounds = _chunk_bounds(g.n, k)
    report = ChunkReport(k=k, total=0.0, boundary_pairs=0)

    # value-only forward sweep: keep boundary messages, drop everything else
    vops = ValueOps(model.params, counter, cfg.share_summary_lstm)
    forest = RowForest()
    merge = lambda a, b: vops.tree("row", a, b)
    hrow = vops.zero_state()
    snapshots: list[tuple[dict[tuple[int, int], StatePair], StatePair, int]] = []
    total = 0.0
    stored_pairs = 0
    peak = 0
    for c, (start, end) in enumerate(bounds):
        for u in range(start, end + 1):
            res = row_log_likelihood(
                u, g.rows[u - 1], hrow, vops, L=cfg.L, forced=cfg.forced_children
            )
            total += res.logp
            if u < g.n:
                forest_update(forest, res.g, merge)
                forest.prune_to_live()
                hrow = forest_summary(forest, u, g.n, vops)
            peak = max(peak, stored_pairs + forest.n_entries() + 1)
        if c < k - 1:
            live = {ij: forest.get(*ij) for ij in forest.live_ids()}
            snapshots.append((live, hrow, end))
            stored_pairs += len(live) + 1
    report.total = total
    report.boundary_pairs = stored_pairs

    # backward sweep: re-run chunks last to first on a recording tape
    pending: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
    pending_hrow: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for c in range(k - 1, -1, -1):
        tape = Tape(model.params, counter)
        tops = TapeOps(tape, cfg.share_summary_lstm)
        merge_t = lambda a, b: tops.tree("row", a, b)
        injected: dict[tuple[int, int], tuple] = {}
        rforest = RowForest()
        if c == 0:
            hrow_in = None
            hrow_v = tops.zero_state()
        else:
            live, hrow_snap, boundary_u = snapshots[c - 1]
            for (i, j), state in live.items():
                while len(rforest.levels) <= i:
                    rforest.levels.append({})
                pair = tape.leaf_pair(state.h[None], state.c[None])
                rforest.levels[i][j] = pair
                injected[(i, j)] = pair
            rforest.count = boundary_u
            hrow_in = tape.leaf_pair(hrow_snap.h[None], hrow_snap.c[None])
            hrow_v = hrow_in
        created: dict[tuple[int, int], tuple] = {}
        hrow_out_u = -1
        start, end = bounds[c]
        for u in range(start, end + 1):
            res = row_log_likelihood(
                u, g.rows[u - 1], hrow_v, tops, L=cfg.L, forced=cfg.forced_children
            )
            if u < g.n:
                for ij in forest_update(rforest, res.g, merge_t):
                    created[ij] = rforest.get(*ij)
                hrow_v = forest_summary(rforest, u, g.n, tops)
                hrow_out_u = u
        seeds: list[tuple] = [(tops.total(), 1.0)]
        for ij, pair in created.items():
            grads = pending.pop(ij, None)
            if grads is not None:
                seeds.append((pair[0], grads[0]))
                seeds.append((pair[1], grads[1]))
        if hrow_out_u in pending_hrow:
            gh, gc = pending_hrow.pop(hrow_out_u)
            seeds.append((hrow_v[0], gh))
            seeds.append((hrow_v[1], gc))
        tape.backward(seeds)
        report.chunk_pair_rows.append(tape.pair_rows)
        pending_pairs = len(pending) + len(pending_hrow)
        peak = max(peak, stored_pairs + tape.pair_rows + pending_pairs)
        for ij, pair in injected.items():
            gh = pair[0].grad
            gc = pair[1].grad
            if gh is None and gc is None:
                continue
            old = pending.get(ij)
            add_h = gh if gh is not None else 0.0
            add_c = gc if gc is not None else 0.0
            if old is None:
                pending[ij] = (np.array(add_h, dtype=np.float64), np.array(add_c, dtype=np.float64))
            else:
                pending[ij] = (old[0] + add_h, old[1] + add_c)
        if hrow_in is not None:
            boundary_u = snapshots[c - 1][2]
            gh = hrow_in[0].grad
            gc = hrow_in[1].grad
            if gh is not None or gc is not None:
                zh = np.zeros_like(hrow_in[0].data)
                pending_hrow[boundary_u] = (
                    gh if gh is not None else zh,
                    gc if gc is not None else zh,
                )
    if pending or pending_hrow:
        raise AssertionError("unrouted boundary gradients after chunked backward")
    report.peak_live_pairs = peak
    return total, report
