"""Level-synchronized batched likelihood evaluation.

With the graph given, every quantity the row model needs can be scheduled
into four stages whose internal groups are dependency-free, so one
barrier per group suffices:

1. subtree summaries of all tree nodes, grouped by depth from the leaves
   (interval codes form the base group);
2. prefix-forest merges, grouped by forest level;
3. the per-row prefix summaries, run as one batched LSTM over at most
   log2(n) steps;
4. path states and decision heads, grouped by depth from the root.

Each group is materialized as contiguous matrices with gather/scatter
index lists, so a group costs one dense matrix multiply per kernel. The
resulting arithmetic matches the naive recursion op for op; totals and
gradients agree up to float reassociation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cells import OpCounter, Tape, Var, pos_encode_table
from .edge_tree import EdgeTree, Interval, build_tree, empty_row_code, interval_code
from .graphs import Graph

Ref = tuple[tuple, int]  # (var key, row)


def _freeze(refs: Sequence[Ref | None]) -> list[tuple[tuple, np.ndarray, np.ndarray]]:
    """Group (key,row) refs by source var; None rows stay zero."""
    groups: dict[tuple, tuple[list[int], list[int]]] = {}
    for dst, ref in enumerate(refs):
        if ref is None:
            continue
        key, row = ref
        src, dsts = groups.setdefault(key, ([], []))
        src.append(row)
        dsts.append(dst)
    return [
        (key, np.asarray(src, dtype=np.intp), np.asarray(dst, dtype=np.intp))
        for key, (src, dst) in groups.items()
    ]


@dataclass
class TreeLevel:
    """One depth group of bottom-up tree merges."""

    n: int
    left_sources: list
    right_sources: list


@dataclass
class ForestLevel:
    """One level of prefix-forest merges; inputs index the level below."""

    left_rows: np.ndarray
    right_rows: np.ndarray
    arange: np.ndarray


@dataclass
class SummaryStep:
    """One batched LSTM step over the still-active prefix summaries."""

    n: int
    x_sources: list
    prev_rows: np.ndarray | None
    arange: np.ndarray


@dataclass
class DecisionLevel:
    """One depth group of the top-down pass across all rows."""

    n: int
    top_sources: list
    pe_left: np.ndarray
    y_left: np.ndarray
    seg: np.ndarray
    lbot_sources: list
    rsel: np.ndarray       # rows with a free right-branch decision
    pe_right: np.ndarray
    y_right: np.ndarray
    seg_right: np.ndarray
    rch_rows: np.ndarray   # rows descending into a right child
    rch_arange: np.ndarray


@dataclass
class StagePlan:
    """Deterministic schedule; every tree node appears in exactly one group."""

    n_graphs: int
    L: int
    forced: bool
    max_pe_k: int
    graphs: list[Graph]
    bits_jobs: list[tuple[int, int, int, int]]  # (graph, row, lo, hi); lo=0 is the empty-row code
    stage1_tree_levels: list[TreeLevel]
    f0_sources: list
    f0_n: int
    stage2_levels: list[ForestLevel]
    stage3_steps: list[SummaryStep]
    hr_sources: list
    hr_n: int
    hr_pe: np.ndarray
    gate_rows: np.ndarray
    gate_y: np.ndarray
    gate_seg: np.ndarray
    stage4_levels: list[DecisionLevel]

    @property
    def stage1_levels(self) -> list:
        """Bits group first, then the bottom-up merge groups."""
        head = [self.bits_jobs] if self.bits_jobs else []
        return head + list(self.stage1_tree_levels)

    def barrier_counts(self) -> dict[str, int]:
        return {
            "stage1": len(self.stage1_levels),
            "stage2": len(self.stage2_levels),
            "stage3": len(self.stage3_steps),
            "stage4": len(self.stage4_levels),
        }

    def total_barriers(self) -> int:
        return sum(self.barrier_counts().values())


class _Builder:
    def __init__(self, graphs: list[Graph], L: int, forced: bool):
        self.graphs = graphs
        self.L = L
        self.forced = forced
        self.bits_jobs: list[tuple[int, int, int, int]] = []
        self.tree_levels: list[list[tuple[Ref | None, Ref | None]]] = []
        self._bot_memo: dict[tuple[int, int, int], tuple[Ref, int]] = {}

    def _bot_ref(self, gi: int, u: int, tree: EdgeTree, idx: int) -> tuple[Ref, int]:
        """Stage-1 slot holding the subtree state of a node; returns (ref, level)."""
        memo_key = (gi, u, idx)
        hit = self._bot_memo.get(memo_key)
        if hit is not None:
            return hit
        node = tree.nodes[idx]
        if node.length <= self.L:
            slot = len(self.bits_jobs)
            self.bits_jobs.append((gi, u, node.lo, node.hi))
            out = ((("s1b",), slot), 0)
        else:
            llev = rlev = 0
            lref = rref = None
            if node.left >= 0:
                lref, llev = self._bot_ref(gi, u, tree, node.left)
            if node.right >= 0:
                rref, rlev = self._bot_ref(gi, u, tree, node.right)
            lvl = 1 + max(llev, rlev)
            while len(self.tree_levels) < lvl:
                self.tree_levels.append([])
            slot = len(self.tree_levels[lvl - 1])
            self.tree_levels[lvl - 1].append((lref, rref))
            out = ((("s1t", lvl), slot), lvl)
        self._bot_memo[memo_key] = out
        return out

    def build(self) -> StagePlan:
        graphs = self.graphs
        trees: list[list[EdgeTree | None]] = []
        for g in graphs:
            ts: list[EdgeTree | None] = [None] * g.n
            for u in range(2, g.n + 1):
                nb = g.rows[u - 1]
                if nb:
                    ts[u - 1] = build_tree(list(nb), Interval(1, u - 1))
            trees.append(ts)

        # forest base entries: root summaries of rows 1..n-1 per graph
        f0_refs: list[Ref] = []
        hr_offset: list[int] = []
        for gi, g in enumerate(graphs):
            hr_offset.append(len(f0_refs))
            for u in range(1, g.n):
                tree = trees[gi][u - 1]
                if tree is None:
                    slot = len(self.bits_jobs)
                    self.bits_jobs.append((gi, u, 0, 0))
                    f0_refs.append((("s1b",), slot))
                else:
                    f0_refs.append(self._bot_ref(gi, u, tree, 0)[0])
        f0_n = len(f0_refs)

        # forest merge levels; per-graph blocks are contiguous at every level
        f_off: list[list[int]] = [[0] * len(graphs)]
        sizes = [g.n - 1 for g in graphs]
        off = 0
        for gi in range(len(graphs)):
            f_off[0][gi] = off
            off += sizes[gi]
        stage2: list[ForestLevel] = []
        level = 0
        while True:
            next_sizes = [s >> 1 for s in sizes]
            if not any(next_sizes):
                break
            left, right = [], []
            offs = [0] * len(graphs)
            off = 0
            for gi in range(len(graphs)):
                offs[gi] = off
                base = f_off[level][gi]
                for j in range(1, next_sizes[gi] + 1):
                    left.append(base + 2 * j - 2)
                    right.append(base + 2 * j - 1)
                off += next_sizes[gi]
            stage2.append(
                ForestLevel(
                    np.asarray(left, dtype=np.intp),
                    np.asarray(right, dtype=np.intp),
                    np.arange(len(left), dtype=np.intp),
                )
            )
            f_off.append(offs)
            sizes = next_sizes
            level += 1

        # prefix summaries: one LSTM step per set bit, highest level first
        seqs: list[tuple[int, int, list[tuple[int, int]]]] = []
        for gi, g in enumerate(graphs):
            for u in range(1, g.n):
                ids = [
                    (i, u >> i)
                    for i in range(u.bit_length() - 1, -1, -1)
                    if (u >> i) & 1
                ]
                seqs.append((gi, u, ids))
        max_steps = max((len(ids) for _, _, ids in seqs), default=0)
        steps: list[SummaryStep] = []
        final_ref: dict[tuple[int, int], Ref] = {}
        prev_pos: dict[tuple[int, int], int] = {}
        for t in range(max_steps):
            active = [(gi, u, ids) for gi, u, ids in seqs if len(ids) > t]
            x_refs: list[Ref] = []
            prev_rows = [] if t else None
            pos: dict[tuple[int, int], int] = {}
            for row, (gi, u, ids) in enumerate(active):
                i, j = ids[t]
                x_refs.append((("f", i), f_off[i][gi] + j - 1))
                if t:
                    prev_rows.append(prev_pos[(gi, u)])
                pos[(gi, u)] = row
                if len(ids) == t + 1:
                    final_ref[(gi, u)] = (("step", t), row)
            steps.append(
                SummaryStep(
                    len(active),
                    _freeze(x_refs),
                    np.asarray(prev_rows, dtype=np.intp) if t else None,
                    np.arange(len(active), dtype=np.intp),
                )
            )
            prev_pos = pos

        hr_refs = [
            final_ref[(gi, u)]
            for gi, g in enumerate(graphs)
            for u in range(1, g.n)
        ]
        hr_pe = np.asarray(
            [g.n - u for gi, g in enumerate(graphs) for u in range(1, g.n)],
            dtype=np.intp,
        )

        # row gates for u = 2..n read the summary of the previous row
        gate_rows, gate_y, gate_seg = [], [], []
        for gi, g in enumerate(graphs):
            for u in range(2, g.n + 1):
                gate_rows.append(hr_offset[gi] + u - 2)
                gate_y.append(bool(g.rows[u - 1]))
                gate_seg.append(gi)

        # top-down decision levels
        cur: list[tuple[int, int, EdgeTree, int, Ref]] = []
        for gi, g in enumerate(graphs):
            for u in range(2, g.n + 1):
                tree = trees[gi][u - 1]
                if tree is not None and not tree.nodes[0].is_leaf:
                    cur.append((gi, u, tree, 0, (("hr",), hr_offset[gi] + u - 2)))
        stage4: list[DecisionLevel] = []
        depth = 0
        while cur:
            top_refs: list[Ref] = []
            pe_left, y_left, seg = [], [], []
            lbot_refs: list[Ref | None] = []
            rsel, pe_right, y_right, seg_right = [], [], [], []
            rch_rows: list[int] = []
            nxt: list[tuple[int, int, EdgeTree, int, Ref]] = []
            for row, (gi, u, tree, idx, top_ref) in enumerate(cur):
                node = tree.nodes[idx]
                has_left = node.left >= 0
                has_right = node.right >= 0
                top_refs.append(top_ref)
                pe_left.append(node.hi - node.lo)
                y_left.append(has_left)
                seg.append(gi)
                if has_left:
                    lbot_refs.append(self._bot_ref(gi, u, tree, node.left)[0])
                    lnode = tree.nodes[node.left]
                    if not lnode.is_leaf:
                        nxt.append((gi, u, tree, node.left, (("tl", depth), row)))
                else:
                    lbot_refs.append(None)
                if has_left or not self.forced:
                    rsel.append(row)
                    pe_right.append(node.hi - node.mid - 1)
                    y_right.append(has_right)
                    seg_right.append(gi)
                if has_right:
                    rpos = len(rch_rows)
                    rch_rows.append(row)
                    rnode = tree.nodes[node.right]
                    if not rnode.is_leaf:
                        nxt.append((gi, u, tree, node.right, (("tr", depth), rpos)))
            stage4.append(
                DecisionLevel(
                    len(cur),
                    _freeze(top_refs),
                    np.asarray(pe_left, dtype=np.intp),
                    np.asarray(y_left, dtype=bool),
                    np.asarray(seg, dtype=np.intp),
                    _freeze(lbot_refs),
                    np.asarray(rsel, dtype=np.intp),
                    np.asarray(pe_right, dtype=np.intp),
                    np.asarray(y_right, dtype=bool),
                    np.asarray(seg_right, dtype=np.intp),
                    np.asarray(rch_rows, dtype=np.intp),
                    np.arange(len(rch_rows), dtype=np.intp),
                )
            )
            cur = nxt
            depth += 1

        return StagePlan(
            n_graphs=len(graphs),
            L=self.L,
            forced=self.forced,
            max_pe_k=max(g.n for g in graphs),
            graphs=list(graphs),
            bits_jobs=self.bits_jobs,
            stage1_tree_levels=[
                TreeLevel(
                    len(jobs),
                    _freeze([l for l, _ in jobs]),
                    _freeze([r for _, r in jobs]),
                )
                for jobs in self.tree_levels
            ],
            f0_sources=_freeze(f0_refs),
            f0_n=f0_n,
            stage2_levels=stage2,
            stage3_steps=steps,
            hr_sources=_freeze(hr_refs),
            hr_n=len(hr_refs),
            hr_pe=hr_pe,
            gate_rows=np.asarray(gate_rows, dtype=np.intp),
            gate_y=np.asarray(gate_y, dtype=bool),
            gate_seg=np.asarray(gate_seg, dtype=np.intp),
            stage4_levels=stage4,
        )


def plan_stages(
    graphs: Graph | Sequence[Graph], L: int = 256, forced: bool = True
) -> StagePlan:
    """Deterministic four-stage schedule for one graph or a batch."""
    if isinstance(graphs, Graph):
        graphs = [graphs]
    return _Builder(list(graphs), L, forced).build()


def staged_eval(tape: Tape, plan: StagePlan, summary_bundle: str = "seq_cell") -> Var:
    """Run the scheduled batch on a tape; returns per-graph total log-probs."""
    d = tape.params.d
    store: dict[tuple, tuple[Var, Var]] = {}

    def resolve(sources):
        return [(store[k][0], store[k][1], src, dst) for k, src, dst in sources]

    def resolve_h(sources):
        return [(store[k][0], src, dst) for k, src, dst in sources]

    if plan.bits_jobs:
        codes = np.empty((len(plan.bits_jobs), plan.L))
        for r, (gi, u, lo, hi) in enumerate(plan.bits_jobs):
            if lo == 0:
                codes[r] = empty_row_code(plan.L)
            else:
                codes[r] = interval_code(plan.graphs[gi].rows[u - 1], lo, hi, plan.L)
        store[("s1b",)] = tape.bits(codes)
    for lvl, level in enumerate(plan.stage1_tree_levels, start=1):
        lh, lc = tape.gather_pair(resolve(level.left_sources), level.n, d)
        rh, rc = tape.gather_pair(resolve(level.right_sources), level.n, d)
        store[("s1t", lvl)] = tape.tree("tree_bot", lh, lc, rh, rc)

    if plan.f0_n:
        store[("f", 0)] = tape.gather_pair(resolve(plan.f0_sources), plan.f0_n, d)
    for i, flevel in enumerate(plan.stage2_levels, start=1):
        fh, fc = store[("f", i - 1)]
        B = flevel.left_rows.size
        lh, lc = tape.gather_pair([(fh, fc, flevel.left_rows, flevel.arange)], B, d)
        rh, rc = tape.gather_pair([(fh, fc, flevel.right_rows, flevel.arange)], B, d)
        store[("f", i)] = tape.tree("tree_row", lh, lc, rh, rc)

    prev: tuple[Var, Var] | None = None
    for t, step in enumerate(plan.stage3_steps):
        x = tape.gather(resolve_h(step.x_sources), step.n, d)
        if step.prev_rows is None:
            ph, pc = tape.leaf_pair(np.zeros((step.n, d)), np.zeros((step.n, d)))
        else:
            ph, pc = tape.gather_pair(
                [(prev[0], prev[1], step.prev_rows, step.arange)], step.n, d
            )
        prev = tape.lstm(summary_bundle, x, ph, pc)
        store[("step", t)] = prev

    factors: list[tuple[Var, np.ndarray]] = []
    pe_tab = pos_encode_table(plan.max_pe_k, d)
    if plan.hr_n:
        hp, hc = tape.gather_pair(resolve(plan.hr_sources), plan.hr_n, d)
        hr_h = tape.add_pe(hp, pe_tab[plan.hr_pe])
        store[("hr",)] = (hr_h, hc)
    if plan.gate_rows.size:
        ll, _ = tape.bern(
            "row_gate", store[("hr",)][0], None, plan.gate_y, rows=plan.gate_rows
        )
        factors.append((ll, plan.gate_seg))

    for depth, lvl in enumerate(plan.stage4_levels):
        th, tc = tape.gather_pair(resolve(lvl.top_sources), lvl.n, d)
        ll, _ = tape.bern("head_left", th, pe_tab[lvl.pe_left], lvl.y_left)
        factors.append((ll, lvl.seg))
        tl = tape.lstm("desc_cell", ("tok", "tok_left"), th, tc)
        store[("tl", depth)] = tl
        bh, bc = tape.gather_pair(resolve(lvl.lbot_sources), lvl.n, d)
        hat_h, hat_c = tape.tree("tree_top", bh, bc, tl[0], tl[1])
        if lvl.rsel.size:
            ll2, _ = tape.bern(
                "head_right", hat_h, pe_tab[lvl.pe_right], lvl.y_right, rows=lvl.rsel
            )
            factors.append((ll2, lvl.seg_right))
        if lvl.rch_rows.size:
            rh, rc = tape.gather_pair(
                [(hat_h, hat_c, lvl.rch_rows, lvl.rch_arange)], lvl.rch_rows.size, d
            )
            store[("tr", depth)] = tape.lstm("desc_cell", ("tok", "tok_right"), rh, rc)

    return tape.segment_sum(factors, plan.n_graphs)


def staged_log_likelihood(
    model,
    graphs: Graph | Sequence[Graph],
    seed_grads: float | np.ndarray | None = 1.0,
    counter: OpCounter | None = None,
    plan: StagePlan | None = None,
) -> tuple[np.ndarray, StagePlan]:
    """Batched likelihood with gradients accumulated by the staged backward.

    ``seed_grads`` scales d(total)/d(theta) per graph (None skips the
    reverse sweep). Returns per-graph totals and the schedule used.
    """
    glist = [graphs] if isinstance(graphs, Graph) else list(graphs)
    cfg = model.config
    if plan is None:
        plan = plan_stages(glist, cfg.L, cfg.forced_children)
    tape = Tape(model.params, counter)
    bundle = "desc_cell" if cfg.share_summary_lstm else "seq_cell"
    totals_var = staged_eval(tape, plan, bundle)
    totals = totals_var.data.copy()
    if seed_grads is not None:
        seeds = np.broadcast_to(np.asarray(seed_grads, dtype=np.float64), totals.shape)
        tape.backward([(totals_var, seeds)])
    return totals, plan
