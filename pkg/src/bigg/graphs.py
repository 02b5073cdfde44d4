"""Graph containers, node orderings, synthetic generators and file IO.

Graphs are stored with 1-based node indices. Undirected graphs keep a
strictly lower-triangular adjacency: row ``u`` lists only neighbors
``v < u``, so every edge appears exactly once and row 1 is always empty.
"""
from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

ORDER_KINDS = ("default", "bfs", "dfs", "kcore", "degree_asc", "degree_desc")


class GraphValidationError(ValueError):
    """Raised when a graph violates a structural invariant."""


class FileFormatError(ValueError):
    """Raised on malformed graph files; message carries the line number."""


@dataclass(frozen=True)
class Graph:
    """Immutable graph with per-node sorted neighbor rows.

    For ``undirected=True`` rows store only ``v < u`` (the symmetric
    closure is implied). For directed storage rows hold any ``v != u``.
    """

    n: int
    rows: tuple[tuple[int, ...], ...]
    undirected: bool = True

    def __post_init__(self):
        if self.n < 1:
            raise GraphValidationError(f"node count must be positive, got {self.n}")
        if len(self.rows) != self.n:
            raise GraphValidationError(
                f"expected {self.n} rows, got {len(self.rows)}"
            )
        for u, row in enumerate(self.rows, start=1):
            prev = 0
            for v in row:
                if v <= prev:
                    raise GraphValidationError(
                        f"row {u} is not strictly increasing"
                    )
                if self.undirected and v >= u:
                    raise GraphValidationError(
                        f"row {u} holds {v}, expected v < u in undirected storage"
                    )
                if v < 1 or v > self.n or v == u:
                    raise GraphValidationError(f"row {u} holds out-of-range {v}")
                prev = v

    @property
    def m(self) -> int:
        """Edge count; for undirected graphs each edge is stored once."""
        return sum(len(r) for r in self.rows)

    def edges(self) -> Iterator[tuple[int, int]]:
        """Yield stored edges as (u, v) pairs in row-major order."""
        for u, row in enumerate(self.rows, start=1):
            for v in row:
                yield (u, v)

    def adjacency(self) -> list[set[int]]:
        """Symmetric neighbor sets indexed 1..n (index 0 unused)."""
        adj: list[set[int]] = [set() for _ in range(self.n + 1)]
        for u, v in self.edges():
            adj[u].add(v)
            if self.undirected:
                adj[v].add(u)
        return adj

    def degrees(self) -> list[int]:
        """Symmetric degree per node, 0-based list of length n."""
        deg = [0] * (self.n + 1)
        for u, v in self.edges():
            deg[u] += 1
            if self.undirected:
                deg[v] += 1
        return deg[1:]

    def neighbors(self, u: int) -> tuple[int, ...]:
        return self.rows[u - 1]

    @staticmethod
    def from_edges(n: int, edges: Iterable[tuple[int, int]], undirected: bool = True) -> "Graph":
        """Build a graph from an edge iterable, normalizing and deduplicating."""
        rows: list[set[int]] = [set() for _ in range(n + 1)]
        for a, b in edges:
            if a == b:
                raise GraphValidationError(f"self-loop on node {a}")
            if not (1 <= a <= n and 1 <= b <= n):
                raise GraphValidationError(f"edge ({a},{b}) out of range for n={n}")
            if undirected:
                u, v = max(a, b), min(a, b)
            else:
                u, v = a, b
            rows[u].add(v)
        return Graph(n, tuple(tuple(sorted(r)) for r in rows[1:]), undirected)


@dataclass(frozen=True)
class GraphSet:
    """A list of graphs plus the histogram of their node counts."""

    graphs: tuple[Graph, ...]
    node_count_histogram: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        hist = dict(Counter(g.n for g in self.graphs))
        if self.node_count_histogram and self.node_count_histogram != hist:
            raise GraphValidationError("node count histogram inconsistent with graphs")
        object.__setattr__(self, "node_count_histogram", hist)

    def __len__(self) -> int:
        return len(self.graphs)

    def __iter__(self) -> Iterator[Graph]:
        return iter(self.graphs)


class NodeCountSampler:
    """Empirical distribution over graph size fitted from a training set."""

    def __init__(self, histogram: dict[int, int]):
        if not histogram or sum(histogram.values()) <= 0:
            raise ValueError("cannot fit node-count distribution from an empty set")
        self.histogram = dict(sorted(histogram.items()))
        total = sum(self.histogram.values())
        self._values = np.array(list(self.histogram.keys()), dtype=np.int64)
        self._probs = np.array([c / total for c in self.histogram.values()])

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.choice(self._values, p=self._probs))

    def log_prob(self, n: int) -> float:
        if n not in self.histogram:
            return float("-inf")
        i = int(np.searchsorted(self._values, n))
        return float(np.log(self._probs[i]))


def fit_node_count(train: GraphSet) -> NodeCountSampler:
    """Fit the empirical node-count distribution of a graph set."""
    return NodeCountSampler(train.node_count_histogram)


# ---------------------------------------------------------------------------
# node orderings
# ---------------------------------------------------------------------------

def _start_node(adj: list[set[int]], remaining: set[int]) -> int:
    # highest degree, ties broken by smallest original label
    return min(remaining, key=lambda u: (-len(adj[u]), u))


def _bfs_order(g: Graph) -> list[int]:
    adj = g.adjacency()
    remaining = set(range(1, g.n + 1))
    order: list[int] = []
    while remaining:
        root = _start_node(adj, remaining)
        queue = deque([root])
        remaining.discard(root)
        while queue:
            u = queue.popleft()
            order.append(u)
            for v in sorted(adj[u]):
                if v in remaining:
                    remaining.discard(v)
                    queue.append(v)
    return order


def _dfs_order(g: Graph) -> list[int]:
    adj = g.adjacency()
    remaining = set(range(1, g.n + 1))
    order: list[int] = []
    while remaining:
        root = _start_node(adj, remaining)
        stack = [root]
        while stack:
            u = stack.pop()
            if u not in remaining:
                continue
            remaining.discard(u)
            order.append(u)
            # push reversed so the smallest-label neighbor is visited first
            for v in sorted(adj[u], reverse=True):
                if v in remaining:
                    stack.append(v)
    return order


def core_numbers(g: Graph) -> list[int]:
    """K-core number per node (0-based list), by min-degree peeling."""
    adj = g.adjacency()
    deg = {u: len(adj[u]) for u in range(1, g.n + 1)}
    core = {}
    k = 0
    while deg:
        u = min(deg, key=lambda x: (deg[x], x))
        k = max(k, deg[u])
        core[u] = k
        del deg[u]
        for v in adj[u]:
            if v in deg and deg[v] > 0:
                deg[v] -= 1
    return [core[u] for u in range(1, g.n + 1)]


def reorder(g: Graph, kind: str, seed: int | None = None) -> Graph:
    """Relabel nodes of ``g`` by the requested traversal or ranking.

    All kinds are deterministic; ``seed`` is accepted for interface
    stability but unused. BFS and DFS start from the maximum-degree node
    with smallest-label tie-breaks and visit neighbors in ascending label.
    """
    if kind not in ORDER_KINDS:
        raise ValueError(f"unknown ordering {kind!r}, expected one of {ORDER_KINDS}")
    if kind == "default":
        return g
    if kind == "bfs":
        order = _bfs_order(g)
    elif kind == "dfs":
        order = _dfs_order(g)
    elif kind == "kcore":
        core = core_numbers(g)
        order = sorted(range(1, g.n + 1), key=lambda u: (core[u - 1], u))
    elif kind == "degree_asc":
        deg = g.degrees()
        order = sorted(range(1, g.n + 1), key=lambda u: (deg[u - 1], u))
    else:  # degree_desc
        deg = g.degrees()
        order = sorted(range(1, g.n + 1), key=lambda u: (-deg[u - 1], u))
    new_label = {old: i + 1 for i, old in enumerate(order)}
    return Graph.from_edges(
        g.n, ((new_label[u], new_label[v]) for u, v in g.edges()), g.undirected
    )


# ---------------------------------------------------------------------------
# synthetic families
# ---------------------------------------------------------------------------

def gen_grid(rows: int, cols: int) -> Graph:
    """4-neighbor lattice with ``rows * cols`` nodes in row-major labeling."""
    if rows < 1 or cols < 1:
        raise ValueError("grid dimensions must be positive")
    edges = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c + 1
            if c + 1 < cols:
                edges.append((u + 1, u))
            if r + 1 < rows:
                edges.append((u + cols, u))
    return Graph.from_edges(rows * cols, edges)


def gen_erdos_renyi(n: int, p: float, seed: int | np.random.Generator = 0) -> Graph:
    """Include each unordered pair independently with probability ``p``."""
    if n < 1:
        raise ValueError("node count must be positive")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability must be in [0,1], got {p}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rows = [()]  # row 1 empty
    for u in range(2, n + 1):
        mask = rng.random(u - 1) < p
        rows.append(tuple(int(v) for v in np.flatnonzero(mask) + 1))
    return Graph(n, tuple(rows))


def gen_lobster(
    expected_path_len: int,
    p1: float,
    p2: float,
    max_nodes: int,
    seed: int | np.random.Generator = 0,
) -> Graph:
    """Backbone path with one optional leaf per node and one optional
    second-level leaf per first-level leaf.

    Backbone length is Poisson around ``expected_path_len`` (at least 2 when
    the budget allows), each backbone node grows a pendant with probability
    ``p1`` and each pendant grows its own pendant with probability ``p2``.
    Construction stops once ``max_nodes`` nodes exist, so the result always
    satisfies the two-hop-from-backbone property.
    """
    if not (0.0 <= p1 <= 1.0 and 0.0 <= p2 <= 1.0):
        raise ValueError("attachment probabilities must be in [0,1]")
    if expected_path_len < 1 or max_nodes < 1:
        raise ValueError("expected_path_len and max_nodes must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    backbone = min(max_nodes, max(2, int(rng.poisson(expected_path_len))))
    edges = [(i, i - 1) for i in range(2, backbone + 1)]
    n = backbone
    first_level = []
    for u in range(1, backbone + 1):
        if n >= max_nodes:
            break
        if rng.random() < p1:
            n += 1
            edges.append((n, u))
            first_level.append(n)
    for leaf in first_level:
        if n >= max_nodes:
            break
        if rng.random() < p2:
            n += 1
            edges.append((n, leaf))
    return Graph.from_edges(n, edges)


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------
#
# One graph:  a header line "n m" followed by m lines "u v" with
# 1 <= v < u <= n, sorted by (u, v). Lines starting with '#' are ignored.
# A GraphSet file concatenates graphs with a "---" line between them.

def graph_to_lines(g: Graph) -> list[str]:
    if not g.undirected:
        raise ValueError("only undirected graphs can be serialized")
    lines = [f"{g.n} {g.m}"]
    lines.extend(f"{u} {v}" for u, v in g.edges())
    return lines


def save_graphs(graphs: GraphSet | Sequence[Graph], path: str | Path) -> None:
    """Write a GraphSet file; round-trips byte-identically with load_graphs."""
    blocks = ["\n".join(graph_to_lines(g)) for g in graphs]
    text = "\n---\n".join(blocks)
    Path(path).write_text(text + "\n" if text else "")


def _parse_graph_block(lines: list[tuple[int, str]]) -> Graph:
    lineno, header = lines[0]
    parts = header.split()
    if len(parts) != 2:
        raise FileFormatError(f"line {lineno}: expected header 'n m', got {header!r}")
    try:
        n, m = int(parts[0]), int(parts[1])
    except ValueError:
        raise FileFormatError(f"line {lineno}: non-integer header {header!r}") from None
    if n < 1 or m < 0:
        raise FileFormatError(f"line {lineno}: invalid header values n={n} m={m}")
    if len(lines) - 1 != m:
        raise FileFormatError(
            f"line {lineno}: header declares {m} edges, block has {len(lines) - 1}"
        )
    rows: list[set[int]] = [set() for _ in range(n + 1)]
    for lineno, text in lines[1:]:
        parts = text.split()
        if len(parts) != 2:
            raise FileFormatError(f"line {lineno}: expected edge 'u v', got {text!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise FileFormatError(f"line {lineno}: non-integer edge {text!r}") from None
        if not (1 <= v < u <= n):
            raise FileFormatError(
                f"line {lineno}: edge ({u},{v}) violates 1 <= v < u <= {n}"
            )
        if v in rows[u]:
            raise FileFormatError(f"line {lineno}: duplicate edge ({u},{v})")
        rows[u].add(v)
    return Graph(n, tuple(tuple(sorted(r)) for r in rows[1:]))


def load_graphs(path: str | Path) -> GraphSet:
    """Parse a GraphSet file, rejecting malformed input with line numbers."""
    graphs: list[Graph] = []
    block: list[tuple[int, str]] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            if text == "---":
                if not block:
                    raise FileFormatError(f"line {lineno}: empty graph block")
                graphs.append(_parse_graph_block(block))
                block = []
            else:
                block.append((lineno, text))
    if block:
        graphs.append(_parse_graph_block(block))
    return GraphSet(tuple(graphs))
