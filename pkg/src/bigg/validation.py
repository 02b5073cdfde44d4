"""Input conversion and validation for the estimator front end.

Accepted graph inputs: a :class:`~bigg.graphs.Graph`, a networkx-style
undirected graph (duck-typed on ``number_of_nodes``/``edges``), or an
``(n, edge_list)`` pair with 1-based endpoints.
"""
from __future__ import annotations

from typing import Any

from .graphs import Graph, GraphValidationError


def as_graph(obj: Any) -> Graph:
    if isinstance(obj, Graph):
        return obj
    if hasattr(obj, "number_of_nodes") and hasattr(obj, "edges"):
        if getattr(obj, "is_directed", lambda: False)():
            raise GraphValidationError("directed graphs are not supported")
        nodes = sorted(obj.nodes())
        label = {node: i + 1 for i, node in enumerate(nodes)}
        return Graph.from_edges(
            len(nodes), ((label[a], label[b]) for a, b in obj.edges())
        )
    if (
        isinstance(obj, tuple)
        and len(obj) == 2
        and isinstance(obj[0], int)
    ):
        n, edges = obj
        return Graph.from_edges(n, edges)
    raise TypeError(
        f"cannot interpret {type(obj).__name__!r} as a graph; expected Graph, "
        "a networkx-style graph or an (n, edges) pair"
    )


def as_graph_list(X: Any) -> list[Graph]:
    if isinstance(X, Graph):
        return [X]
    try:
        items = list(X)
    except TypeError:
        raise TypeError("expected a graph or an iterable of graphs") from None
    if not items:
        raise ValueError("empty graph collection")
    return [as_graph(item) for item in items]
