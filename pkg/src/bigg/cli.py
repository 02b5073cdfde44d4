"""Batch command-line front end.

Subcommands: gen-data, train, sample, eval, bench. Every command is
deterministic under a fixed --seed, exits nonzero on failure and removes
partial outputs it created. Thread count for per-graph statistic
extraction comes from --threads or BIGG_NUM_THREADS (default: machine
parallelism).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import shutil
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .cells import OpCounter
from .chunked import choose_k, chunked_backprop
from .edge_tree import DecodeMode
from .graphs import (
    GraphSet,
    fit_node_count,
    gen_erdos_renyi,
    gen_grid,
    gen_lobster,
    load_graphs,
    reorder,
    save_graphs,
)
from .metrics import GRAPH_STATISTICS, extract, lobster_error_rate, mmd
from .model import BiggModel, load_model, sample_graph
from .training import parse_config, train


class _OutputGuard:
    """Tracks created outputs so failures do not leave partial files.

    Only paths that did not exist when claimed are removed on failure;
    pre-existing files and directories are left alone.
    """

    def __init__(self):
        self.paths: list[tuple[Path, bool]] = []

    def claim(self, path: str | Path) -> Path:
        p = Path(path)
        self.paths.append((p, p.exists()))
        return p

    def discard_all(self) -> None:
        for p, existed in self.paths:
            if existed:
                continue
            if p.is_dir():
                shutil.rmtree(p, ignore_errors=True)
            elif p.exists():
                p.unlink(missing_ok=True)


def _default_threads() -> int:
    env = os.environ.get("BIGG_NUM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_gen_data(args, guard: _OutputGuard) -> None:
    rng = np.random.default_rng(args.seed)
    graphs = []
    for _ in range(args.count):
        if args.family == "grid":
            r = int(rng.integers(args.grid_min, args.grid_max + 1))
            c = int(rng.integers(args.grid_min, args.grid_max + 1))
            graphs.append(gen_grid(r, c))
        elif args.family == "er":
            graphs.append(gen_erdos_renyi(args.er_n, args.er_p, rng))
        else:
            graphs.append(
                gen_lobster(args.path_len, args.p1, args.p2, args.max_nodes, rng)
            )
    n_train = int(round(args.count * args.split))
    n_train = min(max(n_train, 0), args.count)
    if args.count and n_train == 0:
        n_train = 1
    if args.count - n_train == 0 and args.count > 0:
        print("warning: split leaves an empty test set", file=sys.stderr)
    out = guard.claim(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_graphs(GraphSet(tuple(graphs[:n_train])), out / "train.txt")
    save_graphs(GraphSet(tuple(graphs[n_train:])), out / "test.txt")
    manifest = {
        "family": args.family,
        "count": args.count,
        "split": args.split,
        "seed": args.seed,
        "train": n_train,
        "test": args.count - n_train,
        "params": {
            "grid": {"grid_min": args.grid_min, "grid_max": args.grid_max},
            "er": {"n": args.er_n, "p": args.er_p},
            "lobster": {
                "path_len": args.path_len,
                "p1": args.p1,
                "p2": args.p2,
                "max_nodes": args.max_nodes,
            },
        }[args.family],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {n_train} train / {args.count - n_train} test graphs to {out}")


def _cmd_train(args, guard: _OutputGuard) -> None:
    config = parse_config(args.config)
    train_set = load_graphs(Path(args.data) / "train.txt")
    if not len(train_set):
        raise ValueError("training set is empty")
    graphs = [reorder(g, config.ordering) for g in train_set]
    model = BiggModel.create(config.model_config(), seed=config.seed)
    model.node_sampler = fit_node_count(GraphSet(tuple(graphs)))
    out = guard.claim(args.out)
    model, curve = train(model, graphs, config, out_dir=out)
    print(f"trained {config.epochs} epochs; final loss {curve[-1].loss:.4f}")


def _cmd_sample(args, guard: _OutputGuard) -> None:
    model = load_model(args.model)
    rng = np.random.default_rng(args.seed)
    decode = DecodeMode.parse(args.decode)
    graphs = []
    for _ in range(args.num):
        n = args.nodes if args.nodes else model.node_sampler.sample(rng)
        graphs.append(sample_graph(model, n, rng, decode=decode))
    out = guard.claim(args.out)
    save_graphs(GraphSet(tuple(graphs)), out)
    print(f"sampled {args.num} graphs to {out}")


def _cmd_eval(args, guard: _OutputGuard) -> None:
    ref = list(load_graphs(args.ref))
    gen = list(load_graphs(args.gen))
    if not ref or not gen:
        raise ValueError("both --ref and --gen must hold at least one graph")
    stats = [s.strip() for s in args.stats.split(",") if s.strip()]
    for s in stats:
        if s not in GRAPH_STATISTICS:
            raise ValueError(f"unknown statistic {s!r}, expected {GRAPH_STATISTICS}")
    rows = []
    dump_dir = None
    if args.dump_stats:
        dump_dir = guard.claim(args.dump_stats)
        dump_dir.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        for stat in stats:
            fn = lambda g, s=stat: extract(s, g, spectral_cap=args.spectral_cap)
            ref_vecs = list(pool.map(fn, ref))
            gen_vecs = list(pool.map(fn, gen))
            rows.append((stat, mmd(ref_vecs, gen_vecs, sigma=args.sigma)))
            if dump_dir is not None:
                for tag, vecs in (("ref", ref_vecs), ("gen", gen_vecs)):
                    with open(dump_dir / f"{stat}_{tag}.csv", "w", newline="") as fh:
                        writer = csv.writer(fh)
                        for i, vec in enumerate(vecs):
                            writer.writerow([i] + [repr(x) for x in vec])
    extras = [s.strip() for s in args.extra.split(",") if s.strip()]
    for name in extras:
        if name != "lobster_error":
            raise ValueError(f"unknown extra metric {name!r}")
        rows.append(("lobster_error", lobster_error_rate(gen)))
    out = guard.claim(args.out)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["statistic", "mmd"])
        for stat, value in rows:
            writer.writerow([stat, repr(value)])
    for stat, value in rows:
        print(f"{stat}: {value:.6g}")


def _cmd_bench(args, guard: _OutputGuard) -> None:
    model = load_model(args.model)
    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(args.seed)
    rows = []
    for n in sizes:
        counter = OpCounter()
        t0 = time.perf_counter()
        g = sample_graph(model, n, rng, counter=counter)
        dt = time.perf_counter() - t0
        rows.append((n, "sample", dt, counter.cells, 0))
        side = max(2, int(round(np.sqrt(n))))
        train_graph = reorder(gen_grid(side, max(2, n // side)), model.config.ordering)
        counter = OpCounter()
        model.params.zero_grads()
        t0 = time.perf_counter()
        k = choose_k(train_graph.n, max(1, train_graph.m))
        _, report = chunked_backprop(model, train_graph, k, counter=counter)
        dt = time.perf_counter() - t0
        rows.append((train_graph.n, "train_update", dt, counter.cells, report.peak_live_pairs))
    out = guard.claim(args.out)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "phase", "seconds", "cell_ops", "peak_live_states"])
        for row in rows:
            writer.writerow(row)
    for n, phase, dt, ops, peak in rows:
        print(f"n={n:<7d} {phase:<13s} {dt:8.3f}s  cell_ops={ops:<10d} peak={peak}")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bigg",
        description="Train, sample and evaluate the sparse-graph generator.",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=_default_threads(),
        help="worker threads for statistic extraction (env BIGG_NUM_THREADS)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic train/test split")
    p.add_argument("--family", choices=("grid", "er", "lobster"), required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-min", type=int, default=10)
    p.add_argument("--grid-max", type=int, default=20)
    p.add_argument("--er-n", type=int, default=100)
    p.add_argument("--er-p", type=float, default=0.05)
    p.add_argument("--path-len", type=int, default=25)
    p.add_argument("--p1", type=float, default=0.5)
    p.add_argument("--p2", type=float, default=0.5)
    p.add_argument("--max-nodes", type=int, default=100)
    p.set_defaults(fn=_cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a data directory")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("sample", help="sample graphs from a model bundle")
    p.add_argument("--model", required=True)
    p.add_argument("--num", type=int, required=True)
    p.add_argument("--decode", default="sample")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nodes", type=int, default=0, help="override the sampled node count")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_sample)

    p = sub.add_parser("eval", help="MMD metrics between two graph files")
    p.add_argument("--ref", required=True)
    p.add_argument("--gen", required=True)
    p.add_argument("--stats", default="degree,clustering,orbit,spectral")
    p.add_argument("--extra", default="", help="comma list; supports lobster_error")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--spectral-cap", type=int, default=3000)
    p.add_argument("--dump-stats", default="", help="directory for per-graph statistic vectors")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("bench", help="instrumented scaling probe")
    p.add_argument("--model", required=True)
    p.add_argument("--sizes", required=True, help="comma list of node counts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    guard = _OutputGuard()
    try:
        args.fn(args, guard)
    except Exception as exc:  # noqa: BLE001 - single CLI failure funnel
        guard.discard_all()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
