import itertools

import numpy as np
import pytest

from bigg import BiggModel, Graph, ModelConfig, init_params


def tiny_model(d=4, L=2, seed=0, **cfg) -> BiggModel:
    config = ModelConfig(d=d, L=L, **cfg)
    return BiggModel(init_params(d, L, seed), config)


def grad_snapshot(params):
    return {k: v.copy() for k, v in params.grads.items()}


def grad_rel_diff(a, b) -> float:
    num = np.sqrt(sum(float(((a[k] - b[k]) ** 2).sum()) for k in a))
    den = np.sqrt(sum(float((a[k] ** 2).sum()) for k in a))
    return num / max(den, 1e-300)


def all_graphs(n):
    """Every lower-triangular adjacency on n nodes."""
    slots = [(u, v) for u in range(2, n + 1) for v in range(1, u)]
    for bits in itertools.product((0, 1), repeat=len(slots)):
        rows = [[] for _ in range(n)]
        for (u, v), b in zip(slots, bits):
            if b:
                rows[u - 1].append(v)
        yield Graph(n, tuple(tuple(r) for r in rows))


def finite_difference(params, loss_fn, name, index, eps=1e-6) -> float:
    """Central difference of loss_fn with respect to one coordinate."""
    flat = params.values[name].reshape(-1)
    keep = flat[index]
    flat[index] = keep + eps
    up = loss_fn()
    flat[index] = keep - eps
    down = loss_fn()
    flat[index] = keep
    return (up - down) / (2 * eps)


def fd_check_params(params, loss_fn, rng, coords_per_block=4, eps=1e-6, skip=()):
    """Worst relative error of tape gradients vs central differences.

    ``params.grads`` must already hold the analytic gradients of loss_fn.
    """
    worst = 0.0
    for name, arr in params.values.items():
        if name in skip:
            continue
        flat_grad = params.grads[name].reshape(-1)
        size = arr.size
        idxs = rng.choice(size, size=min(coords_per_block, size), replace=False)
        for i in idxs:
            fd = finite_difference(params, loss_fn, name, i, eps)
            denom = max(abs(fd), abs(flat_grad[i]), 1e-6)
            worst = max(worst, abs(fd - flat_grad[i]) / denom)
    return worst
