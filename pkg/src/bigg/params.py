"""Trainable weights, their gradient buffers, initialization and Adam.

Parameter bundles (all shapes derive from the state width ``d`` and the
bit-compression length ``L``):

==============  ================  ==========================================
name            shape             role
==============  ================  ==========================================
tree_bot.W/b    (2d,5d) / (5d,)   binary TreeLSTM merging child subtree states
tree_top.W/b    (2d,5d) / (5d,)   binary TreeLSTM mixing left-subtree and path context
tree_row.W/b    (2d,5d) / (5d,)   binary TreeLSTM merging prefix-forest entries
desc_cell.W/b   (2d,4d) / (4d,)   LSTM walking down a tree with branch tokens
seq_cell.W/b    (2d,4d) / (4d,)   LSTM consuming prefix-forest roots
head_left.w/b   (d,) / ()         Bernoulli logit for the left-branch decision
head_right.w/b  (d,) / ()         Bernoulli logit for the right-branch decision
row_gate.w/b    (d,) / ()         Bernoulli logit for row non-emptiness
tok_left        (d,)              branch token fed to desc_cell
tok_right       (d,)              branch token fed to desc_cell
bits.W/b        (L,2d) / (2d,)    affine map from a ternary interval code to a state
==============  ================  ==========================================
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CKPT_MAGIC = b"BIGGCKP1"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    """Raised when a checkpoint file fails validation."""


def param_shapes(d: int, L: int) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for cell in ("tree_bot", "tree_top", "tree_row"):
        shapes[f"{cell}.W"] = (2 * d, 5 * d)
        shapes[f"{cell}.b"] = (5 * d,)
    for cell in ("desc_cell", "seq_cell"):
        shapes[f"{cell}.W"] = (2 * d, 4 * d)
        shapes[f"{cell}.b"] = (4 * d,)
    for head in ("head_left", "head_right", "row_gate"):
        shapes[f"{head}.w"] = (d,)
        shapes[f"{head}.b"] = ()
    shapes["tok_left"] = (d,)
    shapes["tok_right"] = (d,)
    shapes["bits.W"] = (L, 2 * d)
    shapes["bits.b"] = (2 * d,)
    return shapes


class ParamStore:
    """All trainable weights plus mirrored gradient buffers."""

    def __init__(self, d: int, L: int, values: dict[str, np.ndarray]):
        self.d = d
        self.L = L
        expected = param_shapes(d, L)
        if set(values) != set(expected):
            missing = set(expected) - set(values)
            extra = set(values) - set(expected)
            raise ValueError(f"parameter name mismatch: missing={missing} extra={extra}")
        for name, shape in expected.items():
            if values[name].shape != shape:
                raise ValueError(
                    f"parameter {name}: expected shape {shape}, got {values[name].shape}"
                )
        self.values = {k: np.asarray(v, dtype=np.float64) for k, v in values.items()}
        self.grads = {k: np.zeros_like(v) for k, v in self.values.items()}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float((g * g).sum()) for g in self.grads.values())))

    def clip_grads(self, max_norm: float) -> float:
        norm = self.grad_norm()
        if norm > max_norm > 0:
            scale = max_norm / norm
            for g in self.grads.values():
                g *= scale
        return norm

    def copy(self) -> "ParamStore":
        return ParamStore(self.d, self.L, {k: v.copy() for k, v in self.values.items()})

    def n_parameters(self) -> int:
        return sum(v.size for v in self.values.values())


def init_params(d: int, L: int, seed: int = 0) -> ParamStore:
    """Glorot-style uniform init scaled by fan-in/out; biases start at zero."""
    if d < 1 or L < 1:
        raise ValueError("d and L must be positive")
    rng = np.random.default_rng(seed)
    values: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(d, L).items():
        if name.endswith(".b"):
            values[name] = np.zeros(shape)
        elif len(shape) == 2:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            values[name] = rng.uniform(-limit, limit, size=shape)
        else:
            limit = np.sqrt(6.0 / (shape[0] + 1))
            values[name] = rng.uniform(-limit, limit, size=shape)
    return ParamStore(d, L, values)


@dataclass
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class AdamState:
    """First/second moment buffers mirroring a ParamStore."""

    def __init__(self, params: ParamStore):
        self.m = {k: np.zeros_like(v) for k, v in params.values.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.values.items()}
        self.t = 0


def adam_step(
    params: ParamStore,
    grads: dict[str, np.ndarray],
    hyper: AdamHyper,
    state: AdamState,
) -> ParamStore:
    """One bias-corrected Adam update, in place; returns ``params``."""
    state.t += 1
    b1, b2 = hyper.beta1, hyper.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, theta in params.values.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        theta -= hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
    return params


# ---------------------------------------------------------------------------
# checkpoint file: magic, version, d, L, then named float64 LE blocks
# ---------------------------------------------------------------------------

def save_checkpoint(params: ParamStore, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<III", CKPT_VERSION, params.d, params.L))
        fh.write(struct.pack("<I", len(params.values)))
        for name in sorted(params.values):
            # np.array keeps 0-d shapes, unlike ascontiguousarray
            arr = np.array(params.values[name], dtype="<f8", order="C")
            enc = name.encode("utf-8")
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path: str | Path) -> ParamStore:
    data = Path(path).read_bytes()
    off = 0

    def take(fmt: str):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(data):
            raise CheckpointError("truncated checkpoint file")
        out = struct.unpack_from(fmt, data, off)
        off += size
        return out

    if data[:8] != CKPT_MAGIC:
        raise CheckpointError(f"bad magic {data[:8]!r}")
    off = 8
    version, d, L = take("<III")
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (count,) = take("<I")
    expected = param_shapes(d, L)
    values: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = take("<H")
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I") if ndim else ()
        if name not in expected:
            raise CheckpointError(f"unknown parameter block {name!r}")
        if tuple(shape) != expected[name]:
            raise CheckpointError(
                f"parameter {name}: shape {tuple(shape)} does not match "
                f"header dims d={d} L={L} (expected {expected[name]})"
            )
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = size * 8
        if off + nbytes > len(data):
            raise CheckpointError(f"truncated data for block {name!r}")
        arr = np.frombuffer(data[off : off + nbytes], dtype="<f8").reshape(shape)
        off += nbytes
        values[name] = arr.astype(np.float64)
    if set(values) != set(expected):
        raise CheckpointError("checkpoint is missing parameter blocks")
    return ParamStore(d, L, values)
