"""Full-graph likelihood and sampling.

A graph is scored row by row: row ``u`` generates its neighbors over
columns [1, u-1] conditioned on the prefix summary of rows 1..u-1, which
the Fenwick-style forest maintains in O(log n) per row. The node-count
term is kept separate from the structural likelihood so training
optimizes only the row model.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cells import OpCounter, Tape
from .edge_tree import DecodeMode, row_log_likelihood, sample_row
from .engine import TapeOps, ValueOps
from .graphs import Graph, NodeCountSampler
from .params import ParamStore, init_params, load_checkpoint, save_checkpoint
from .row_forest import RowForest, forest_summary, forest_update


@dataclass(frozen=True)
class ModelConfig:
    d: int = 256
    L: int = 256
    ordering: str = "bfs"
    decode: str = "sample"
    forced_children: bool = True
    share_summary_lstm: bool = False

    def validate(self) -> None:
        if self.d < 1 or self.L < 1:
            raise ValueError("d and L must be positive")
        DecodeMode.parse(self.decode)


@dataclass
class BiggModel:
    """Parameters plus the fitted node-count distribution and settings."""

    params: ParamStore
    config: ModelConfig
    node_sampler: NodeCountSampler | None = None

    def __post_init__(self):
        if (self.params.d, self.params.L) != (self.config.d, self.config.L):
            raise ValueError(
                f"parameter dims ({self.params.d},{self.params.L}) do not match "
                f"config ({self.config.d},{self.config.L})"
            )

    @staticmethod
    def create(config: ModelConfig, seed: int = 0) -> "BiggModel":
        config.validate()
        return BiggModel(init_params(config.d, config.L, seed), config)


def _make_ops(model: BiggModel, tape: Tape | None, counter: OpCounter | None):
    if tape is not None:
        return TapeOps(tape, model.config.share_summary_lstm)
    return ValueOps(model.params, counter, model.config.share_summary_lstm)


def _check_canonical_input(model: BiggModel, g: Graph) -> None:
    if not g.undirected:
        raise ValueError("the row model scores undirected lower-triangular graphs")


def graph_log_likelihood(
    model: BiggModel,
    g: Graph,
    tape: Tape | None = None,
    counter: OpCounter | None = None,
    ops=None,
) -> tuple[float, list[float]]:
    """Structural log-likelihood of a canonically ordered graph.

    Returns the total and the per-row decomposition. The node-count term
    is reported separately by :func:`node_log_prob`. When a recording
    ``tape`` is supplied the total is also available through the returned
    engine's factor list for reverse accumulation.
    """
    _check_canonical_input(model, g)
    if ops is None:
        ops = _make_ops(model, tape, counter)
    cfg = model.config
    hrow = ops.zero_state()
    forest = RowForest()
    merge = lambda a, b: ops.tree("row", a, b)
    per_row: list[float] = []
    for u in range(1, g.n + 1):
        res = row_log_likelihood(
            u, g.rows[u - 1], hrow, ops, L=cfg.L, forced=cfg.forced_children
        )
        per_row.append(res.logp)
        if u < g.n:
            forest_update(forest, res.g, merge)
            hrow = forest_summary(forest, u, g.n, ops)
    return float(sum(per_row)), per_row


def graph_ll_with_grads(
    model: BiggModel, g: Graph, counter: OpCounter | None = None, seed_grad: float = 1.0
) -> float:
    """Naive-mode likelihood plus reverse sweep into the gradient buffers."""
    tape = Tape(model.params, counter)
    ops = TapeOps(tape, model.config.share_summary_lstm)
    total, _ = graph_log_likelihood(model, g, ops=ops)
    tape.backward([(ops.total(), seed_grad)])
    return total


def sample_graph(
    model: BiggModel,
    n: int,
    rng: np.random.Generator,
    decode: DecodeMode | str | None = None,
    counter: OpCounter | None = None,
) -> Graph:
    """Draw a graph with ``n`` nodes row by row (depth-first per row)."""
    if n < 1:
        raise ValueError("node count must be positive")
    if decode is None:
        decode = DecodeMode.parse(model.config.decode)
    elif isinstance(decode, str):
        decode = DecodeMode.parse(decode)
    cfg = model.config
    ops = ValueOps(model.params, counter, cfg.share_summary_lstm)
    merge = lambda a, b: ops.tree("row", a, b)
    hrow = ops.zero_state()
    forest = RowForest()
    rows: list[tuple[int, ...]] = []
    for u in range(1, n + 1):
        neighbors, _, g_state = sample_row(
            u, hrow, ops, rng, decode, L=cfg.L, forced=cfg.forced_children
        )
        rows.append(tuple(neighbors))
        if u < n:
            forest_update(forest, g_state, merge)
            forest.prune_to_live()
            hrow = forest_summary(forest, u, n, ops)
    return Graph(n, tuple(rows))


def node_log_prob(model: BiggModel, n: int) -> float:
    """Log empirical frequency of graph size n; unseen sizes return -inf."""
    if model.node_sampler is None:
        raise ValueError("node-count distribution has not been fitted")
    return model.node_sampler.log_prob(n)


def complexity_probe(
    model: BiggModel,
    n_list: list[int],
    seed: int = 0,
    decode: DecodeMode | str | None = None,
) -> list[dict]:
    """Sample one graph per size and record instrumented cell-op counts.

    Each row reports the count alongside the envelope value
    (n + m) * (ceil(log2 n) + 1); the ratio column is the fitted constant.
    """
    rng = np.random.default_rng(seed)
    out = []
    for n in n_list:
        counter = OpCounter()
        t0 = time.perf_counter()
        g = sample_graph(model, n, rng, decode=decode, counter=counter)
        dt = time.perf_counter() - t0
        envelope = (n + g.m) * (int(np.ceil(np.log2(max(n, 2)))) + 1)
        out.append(
            {
                "n": n,
                "m_edges": g.m,
                "seconds": dt,
                "cell_ops": counter.cells,
                "envelope": envelope,
                "ratio": counter.cells / envelope,
            }
        )
    return out


# ---------------------------------------------------------------------------
# model bundle directory: checkpoint + metadata key-value file
# ---------------------------------------------------------------------------

_META_NAME = "meta.txt"
_CKPT_NAME = "params.ckpt"


def save_model(model: BiggModel, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model.params, out / _CKPT_NAME)
    cfg = model.config
    lines = [
        f"d = {cfg.d}",
        f"L = {cfg.L}",
        f"ordering = {cfg.ordering}",
        f"decode = {cfg.decode}",
        f"forced_children = {int(cfg.forced_children)}",
        f"share_summary_lstm = {int(cfg.share_summary_lstm)}",
    ]
    if model.node_sampler is not None:
        hist = ",".join(f"{n}:{c}" for n, c in sorted(model.node_sampler.histogram.items()))
        lines.append(f"node_counts = {hist}")
    (out / _META_NAME).write_text("\n".join(lines) + "\n")


def load_model(model_dir: str | Path) -> BiggModel:
    src = Path(model_dir)
    meta: dict[str, str] = {}
    for lineno, raw in enumerate((src / _META_NAME).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{_META_NAME} line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        meta[key] = value
    config = ModelConfig(
        d=int(meta["d"]),
        L=int(meta["L"]),
        ordering=meta.get("ordering", "bfs"),
        decode=meta.get("decode", "sample"),
        forced_children=bool(int(meta.get("forced_children", "1"))),
        share_summary_lstm=bool(int(meta.get("share_summary_lstm", "0"))),
    )
    config.validate()
    params = load_checkpoint(src / _CKPT_NAME)
    if (params.d, params.L) != (config.d, config.L):
        raise ValueError(
            f"checkpoint dims ({params.d},{params.L}) disagree with metadata "
            f"({config.d},{config.L})"
        )
    sampler = None
    if "node_counts" in meta and meta["node_counts"]:
        hist = {}
        for item in meta["node_counts"].split(","):
            n, c = item.split(":")
            hist[int(n)] = int(c)
        sampler = NodeCountSampler(hist)
    return BiggModel(params, config, sampler)
