"""Autoregressive generation of sparse graphs in O((n+m) log n) time.

Adjacency rows are generated through interval-bisection trees and rows are
chained through a Fenwick-style forest of prefix summaries, so both
likelihood evaluation and sampling touch O((n+m) log n) cell applications
instead of the full adjacency matrix.
"""

from .cells import (
    OpCounter,
    StatePair,
    Tape,
    backward,
    bernoulli_head,
    bits_embed,
    bits_encode,
    lstm_cell,
    pos_encode,
    tree_cell,
)
from .edge_tree import (
    DecodeMode,
    EdgeTree,
    Interval,
    TraceStep,
    bottom_up,
    build_tree,
    row_log_likelihood,
    sample_row,
    trace_log_likelihood,
)
from .chunked import ChunkReport, choose_k, chunked_backprop
from .estimator import BiggGraphGenerator
from .graphs import (
    Graph,
    GraphSet,
    NodeCountSampler,
    fit_node_count,
    gen_erdos_renyi,
    gen_grid,
    gen_lobster,
    load_graphs,
    reorder,
    save_graphs,
)
from .metrics import (
    GRAPH_STATISTICS,
    extract,
    is_lobster,
    lobster_error_rate,
    mmd,
    orbit_counts,
)
from .model import (
    BiggModel,
    ModelConfig,
    complexity_probe,
    graph_log_likelihood,
    load_model,
    node_log_prob,
    sample_graph,
    save_model,
)
from .params import AdamHyper, AdamState, ParamStore, adam_step, init_params
from .row_forest import RowForest, forest_summary, forest_update
from .staging import StagePlan, plan_stages, staged_log_likelihood
from .training import TrainConfig, parse_config, save_config, train
from .validation import as_graph, as_graph_list

__version__ = "0.1.0"
