"""Training loop: Adam on the mean negative graph log-likelihood.

Gradients come from the staged batched evaluator (or the chunked
recomputation path when a memory policy asks for it). The learning rate
starts at its configured value and halves whenever the epoch loss fails
to improve by a relative margin over a trailing window, floored at
``lr_floor``. Runs are deterministic given the seed.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .chunked import choose_k, chunked_backprop
from .graphs import Graph, GraphSet, fit_node_count
from .model import BiggModel, ModelConfig, save_model
from .params import AdamHyper, AdamState, adam_step
from .staging import plan_stages, staged_log_likelihood


@dataclass
class TrainConfig:
    d: int = 256
    L: int = 256
    lr: float = 1e-3
    lr_floor: float = 1e-5
    epochs: int = 100
    seed: int = 0
    ordering: str = "bfs"
    decode: str = "sample"
    k_policy: str = "full"  # "full", "auto", or a chunk count
    plateau_window: int = 5
    plateau_factor: float = 0.5
    plateau_tol: float = 1e-3
    batch_size: int = 8
    clip_norm: float = 5.0

    def validate(self) -> None:
        if self.d < 1 or self.L < 1:
            raise ValueError("d and L must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not 0 < self.lr_floor <= self.lr:
            raise ValueError("need 0 < lr_floor <= lr")
        if self.plateau_window < 1 or not 0 < self.plateau_factor < 1:
            raise ValueError("invalid plateau settings")
        if self.k_policy not in ("full", "auto"):
            try:
                k = int(self.k_policy)
            except ValueError:
                raise ValueError(
                    f"k_policy must be 'full', 'auto' or an integer, got {self.k_policy!r}"
                ) from None
            if k < 1:
                raise ValueError("chunk count must be positive")

    def model_config(self) -> ModelConfig:
        return ModelConfig(d=self.d, L=self.L, ordering=self.ordering, decode=self.decode)


_INT_KEYS = {"d", "L", "epochs", "seed", "plateau_window", "batch_size"}
_FLOAT_KEYS = {"lr", "lr_floor", "plateau_factor", "plateau_tol", "clip_norm"}


def parse_config(path: str | Path) -> TrainConfig:
    """Read a flat 'key = value' config file; unknown keys are rejected."""
    known = {f.name for f in fields(TrainConfig)}
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key in _INT_KEYS:
            values[key] = int(value)
        elif key in _FLOAT_KEYS:
            values[key] = float(value)
        else:
            values[key] = value
    config = TrainConfig(**values)
    config.validate()
    return config


def save_config(config: TrainConfig, path: str | Path) -> None:
    lines = [f"{f.name} = {getattr(config, f.name)}" for f in fields(TrainConfig)]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    lr: float


def _batches(n_graphs: int, batch_size: int) -> list[list[int]]:
    idx = list(range(n_graphs))
    return [idx[i : i + batch_size] for i in range(0, n_graphs, batch_size)]


def train(
    model: BiggModel,
    train_set: GraphSet | Sequence[Graph],
    config: TrainConfig,
    out_dir: str | Path | None = None,
    stop_fn: Callable[[int, float, BiggModel], bool] | None = None,
) -> tuple[BiggModel, list[EpochStats]]:
    """Fit the row model on canonically ordered graphs.

    Writes a checkpoint bundle and a loss-curve row per epoch when
    ``out_dir`` is given. ``stop_fn(epoch, loss, model)`` may end training
    early (evaluated after each epoch).
    """
    config.validate()
    graphs = list(train_set)
    if not graphs:
        raise ValueError("training set is empty")
    if (model.config.d, model.config.L) != (config.d, config.L):
        raise ValueError("model dimensions disagree with training config")
    if model.node_sampler is None:
        model.node_sampler = fit_node_count(GraphSet(tuple(graphs)))

    rng = np.random.default_rng(config.seed)
    batches = _batches(len(graphs), config.batch_size)
    plans = [
        plan_stages([graphs[i] for i in batch], config.L, model.config.forced_children)
        for batch in batches
    ]
    hyper = AdamHyper(lr=config.lr)
    adam = AdamState(model.params)
    curve: list[EpochStats] = []
    best = np.inf
    stall = 0
    out = Path(out_dir) if out_dir is not None else None
    curve_path = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        curve_path = out / "loss_curve.csv"
        curve_path.write_text("epoch,loss,lr\n")

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(batches))
        epoch_ll = 0.0
        for bi in order:
            batch = batches[bi]
            model.params.zero_grads()
            if config.k_policy == "full":
                totals, _ = staged_log_likelihood(
                    model, [graphs[i] for i in batch], seed_grads=1.0, plan=plans[bi]
                )
                epoch_ll += float(totals.sum())
            else:
                for i in batch:
                    g = graphs[i]
                    k = (
                        choose_k(g.n, max(1, g.m))
                        if config.k_policy == "auto"
                        else min(int(config.k_policy), g.n)
                    )
                    total, _ = chunked_backprop(model, g, k)
                    epoch_ll += total
            # loss is the mean negative log-likelihood over the batch
            scale = -1.0 / len(batch)
            for grad in model.params.grads.values():
                grad *= scale
            model.params.clip_grads(config.clip_norm)
            adam_step(model.params, model.params.grads, hyper, adam)
        loss = -epoch_ll / len(graphs)
        curve.append(EpochStats(epoch, loss, hyper.lr))
        if curve_path is not None:
            with open(curve_path, "a") as fh:
                fh.write(f"{epoch},{loss!r},{hyper.lr!r}\n")
        if out is not None:
            save_model(model, out)
        improved = not np.isfinite(best) or best - loss > config.plateau_tol * abs(best)
        if improved:
            best = loss
            stall = 0
        else:
            stall += 1
            if stall >= config.plateau_window:
                hyper.lr = max(config.lr_floor, hyper.lr * config.plateau_factor)
                stall = 0
        if stop_fn is not None and stop_fn(epoch, loss, model):
            break
    return model, curve
