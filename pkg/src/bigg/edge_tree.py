"""Interval-bisection trees over one adjacency row.

A row's sorted neighbor set is encoded as the minimal binary tree whose
leaves are exactly the neighbor singletons: each node covers a column
interval, split at mid = floor((lo+hi)/2), and a child exists iff its half
contains a neighbor. Generation walks the same tree in depth-first
(in-order) fashion, deciding child existence with Bernoulli heads.

Two conventions restore exact normalization over all possible rows:

* a per-row gate decides emptiness before any tree is walked, and
* inside a node, a missing left child forces the right child (the forced
  decision contributes no likelihood factor), so every materialized node
  covers at least one edge. The unforced variant stays available behind a
  flag for ablation.
"""
from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Interval:
    """Closed 1-based column interval; children split at floor((lo+hi)/2)."""

    lo: int
    hi: int

    def __post_init__(self):
        if not 1 <= self.lo <= self.hi:
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")

    @property
    def mid(self) -> int:
        return (self.lo + self.hi) // 2

    @property
    def length(self) -> int:
        return self.hi - self.lo + 1


@dataclass
class TreeNode:
    lo: int
    hi: int
    depth: int
    left: int = -1
    right: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.lo == self.hi

    @property
    def mid(self) -> int:
        return (self.lo + self.hi) // 2

    @property
    def length(self) -> int:
        return self.hi - self.lo + 1


@dataclass
class EdgeTree:
    """Materialized bisection tree; ``nodes[0]`` is the root."""

    span: Interval
    nodes: list[TreeNode]

    def __len__(self) -> int:
        return len(self.nodes)

    def leaves(self) -> list[int]:
        """Leaf column indices in left-to-right order."""
        out: list[int] = []

        def rec(i: int) -> None:
            node = self.nodes[i]
            if node.is_leaf:
                out.append(node.lo)
                return
            if node.left >= 0:
                rec(node.left)
            if node.right >= 0:
                rec(node.right)

        rec(0)
        return out

    def depth(self) -> int:
        return max(nd.depth for nd in self.nodes) + 1


def build_tree(neighbors: Sequence[int], span: Interval) -> EdgeTree:
    """Minimal bisection tree whose leaves are the given sorted neighbors."""
    nb = list(neighbors)
    if not nb:
        raise ValueError("cannot build a tree for an empty neighbor set")
    for a, b in zip(nb, nb[1:]):
        if b <= a:
            raise ValueError("neighbors must be strictly increasing")
    if nb[0] < span.lo or nb[-1] > span.hi:
        raise ValueError(f"neighbors {nb[0]}..{nb[-1]} outside span [{span.lo},{span.hi}]")
    nodes: list[TreeNode] = []

    def rec(lo: int, hi: int, a: int, b: int, depth: int) -> int:
        idx = len(nodes)
        nodes.append(TreeNode(lo, hi, depth))
        if lo == hi:
            return idx
        mid = (lo + hi) // 2
        s = bisect_right(nb, mid, a, b)
        if a < s:
            nodes[idx].left = rec(lo, mid, a, s, depth + 1)
        if s < b:
            nodes[idx].right = rec(mid + 1, hi, s, b, depth + 1)
        return idx

    rec(span.lo, span.hi, 0, len(nb), 0)
    return EdgeTree(span, nodes)


def interval_code(neighbors: Sequence[int], lo: int, hi: int, L: int) -> np.ndarray:
    """Ternary code of the row restricted to [lo, hi]: -1 padding, then bits."""
    blen = hi - lo + 1
    if blen > L:
        raise ValueError(f"interval length {blen} exceeds compression length {L}")
    code = np.full(L, -1.0)
    code[L - blen :] = 0.0
    i0 = bisect_left(neighbors, lo)
    i1 = bisect_right(neighbors, hi)
    base = L - blen - lo
    for k in range(i0, i1):
        code[base + neighbors[k]] = 1.0
    return code


def empty_row_code(L: int) -> np.ndarray:
    """All-padding code; the learned constant standing in for an empty row."""
    return np.full(L, -1.0)


# ---------------------------------------------------------------------------
# traces and decode modes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceStep:
    """One Bernoulli decision site: forced steps carry no likelihood."""

    site: str  # "gate", "left" or "right"
    lo: int
    hi: int
    prob: float
    outcome: bool
    forced: bool

    @property
    def logp(self) -> float:
        if self.forced:
            return 0.0
        return float(np.log(self.prob if self.outcome else 1.0 - self.prob))


def trace_log_likelihood(trace: Sequence[TraceStep]) -> float:
    return sum(step.logp for step in trace)


@dataclass(frozen=True)
class DecodeMode:
    """Per-decision mixing: Bernoulli draw with probability eps, else argmax."""

    eps: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("eps must be in [0,1]")

    @staticmethod
    def parse(text: str) -> "DecodeMode":
        if text == "sample":
            return DecodeMode(1.0)
        if text == "greedy":
            return DecodeMode(0.0)
        if text.startswith("eps:"):
            return DecodeMode(float(text.split(":", 1)[1]))
        raise ValueError(f"unknown decode mode {text!r} (sample, greedy or eps:<p>)")

    def decide(self, p: float, rng: np.random.Generator) -> bool:
        if self.eps >= 1.0:
            return bool(rng.random() < p)
        if self.eps <= 0.0:
            return p >= 0.5
        if rng.random() < self.eps:
            return bool(rng.random() < p)
        return p >= 0.5


@dataclass
class RowResult:
    logp: float
    trace: list[TraceStep]
    g: object  # root summary state, engine-specific


# ---------------------------------------------------------------------------
# bottom-up summarization
# ---------------------------------------------------------------------------

def bottom_up(tree: EdgeTree, ops, L: int):
    """Subtree states for the pruned tree: nodes whose interval is at most
    L wide are one affine code lookup and their subtrees are skipped.

    Returns (states, root_state) where states maps node index -> state.
    """
    nb = tree.leaves()
    states: dict[int, object] = {}

    def rec(i: int):
        node = tree.nodes[i]
        if node.length <= L:
            s = ops.bits(interval_code(nb, node.lo, node.hi, L))
        else:
            sl = rec(node.left) if node.left >= 0 else ops.zero_state()
            sr = rec(node.right) if node.right >= 0 else ops.zero_state()
            s = ops.tree("bot", sl, sr)
        states[i] = s
        return s

    root = rec(0)
    return states, root


# ---------------------------------------------------------------------------
# row likelihood
# ---------------------------------------------------------------------------

def row_log_likelihood(
    u: int,
    neighbors: Sequence[int],
    h_row_prev,
    ops,
    L: int,
    forced: bool = True,
) -> RowResult:
    """Log-likelihood of one adjacency row given the prefix summary.

    Walks the canonical tree depth-first, scoring the gate, each
    left-branch decision on the node's path state and each free
    right-branch decision on the combined left-subtree/path state. Every
    head input is shifted by the positional code of the decided interval's
    width. Returns the row's root summary state for the prefix forest.
    """
    nb = list(neighbors)
    if u < 1:
        raise ValueError("row index must be positive")
    if nb and (nb[0] < 1 or nb[-1] >= u):
        raise ValueError(f"row {u}: neighbors must lie in [1, {u - 1}]")
    trace: list[TraceStep] = []
    if u == 1:
        return RowResult(0.0, trace, ops.bits(empty_row_code(L)))

    nonempty = bool(nb)
    ll, p = ops.head_ll("gate", h_row_prev, None, nonempty)
    trace.append(TraceStep("gate", 1, u - 1, p, nonempty, False))
    if not nonempty:
        return RowResult(ll, trace, ops.bits(empty_row_code(L)))

    total = ll
    tree = build_tree(nb, Interval(1, u - 1))
    nodes = tree.nodes

    def walk(i: int, h_top, need_bot: bool):
        nonlocal total
        node = nodes[i]
        if node.is_leaf:
            return ops.bits(interval_code(nb, node.lo, node.hi, L)) if need_bot else None
        has_left = node.left >= 0
        has_right = node.right >= 0
        step_ll, prob = ops.head_ll("left", h_top, node.hi - node.lo, has_left)
        total += step_ll
        trace.append(TraceStep("left", node.lo, node.mid, prob, has_left, False))
        h_top_l = ops.lstm_tok("tok_left", h_top)
        if has_left:
            bot_l = walk(node.left, h_top_l, True)
        else:
            bot_l = ops.zero_state()
        hat = ops.tree("top", bot_l, h_top_l)
        rlo = node.mid + 1
        if has_left or not forced:
            step_ll, prob = ops.head_ll("right", hat, node.hi - rlo, has_right)
            total += step_ll
            trace.append(TraceStep("right", rlo, node.hi, prob, has_right, False))
        else:
            trace.append(TraceStep("right", rlo, node.hi, 1.0, True, True))
        if has_right:
            h_top_r = ops.lstm_tok("tok_right", hat)
            bot_r = walk(node.right, h_top_r, node.length > L)
        elif need_bot and node.length > L:
            bot_r = ops.zero_state()
        else:
            bot_r = None
        if not need_bot:
            return None
        if node.length <= L:
            return ops.bits(interval_code(nb, node.lo, node.hi, L))
        return ops.tree("bot", bot_l, bot_r)

    g = walk(0, h_row_prev, True)
    return RowResult(total, trace, g)


# ---------------------------------------------------------------------------
# row sampling
# ---------------------------------------------------------------------------

def sample_row(
    u: int,
    h_row_prev,
    ops,
    rng: np.random.Generator,
    decode: DecodeMode,
    L: int,
    forced: bool = True,
) -> tuple[list[int], list[TraceStep], object]:
    """Draw one adjacency row; returns (sorted neighbors, trace, root state)."""
    trace: list[TraceStep] = []
    if u == 1:
        return [], trace, ops.bits(empty_row_code(L))
    p = ops.head_prob("gate", h_row_prev, None)
    nonempty = decode.decide(p, rng)
    trace.append(TraceStep("gate", 1, u - 1, p, nonempty, False))
    if not nonempty:
        return [], trace, ops.bits(empty_row_code(L))

    neighbors: list[int] = []

    def walk(lo: int, hi: int, h_top, need_bot: bool):
        if lo == hi:
            neighbors.append(lo)
            return ops.bits(interval_code(neighbors, lo, hi, L)) if need_bot else None
        mid = (lo + hi) // 2
        length = hi - lo + 1
        start = len(neighbors)
        p = ops.head_prob("left", h_top, hi - lo)
        has_left = decode.decide(p, rng)
        trace.append(TraceStep("left", lo, mid, p, has_left, False))
        h_top_l = ops.lstm_tok("tok_left", h_top)
        if has_left:
            bot_l = walk(lo, mid, h_top_l, True)
        else:
            bot_l = ops.zero_state()
        hat = ops.tree("top", bot_l, h_top_l)
        if has_left or not forced:
            p = ops.head_prob("right", hat, hi - mid - 1)
            has_right = decode.decide(p, rng)
            trace.append(TraceStep("right", mid + 1, hi, p, has_right, False))
        else:
            has_right = True
            trace.append(TraceStep("right", mid + 1, hi, 1.0, True, True))
        if has_right:
            h_top_r = ops.lstm_tok("tok_right", hat)
            bot_r = walk(mid + 1, hi, h_top_r, length > L)
        elif need_bot and length > L:
            bot_r = ops.zero_state()
        else:
            bot_r = None
        if not need_bot:
            return None
        if length <= L:
            return ops.bits(interval_code(neighbors[start:], lo, hi, L))
        return ops.tree("bot", bot_l, bot_r)

    g = walk(1, u - 1, h_row_prev, True)
    return neighbors, trace, g
