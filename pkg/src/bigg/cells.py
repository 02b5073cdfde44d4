"""Recurrent kernels and a reverse-mode tape.

The fused kernels run on (B, d) float64 batches and return the caches
their hand-written backward passes need. A ``Tape`` records one backward
closure per op, so reverse accumulation replays them in exact reverse
order of the forward pass (the forward-only 1-D variants used by sampling
live in the engine module and share this arithmetic).

Gate layouts are fixed: LSTM packs (input, forget, output, candidate) and
the binary TreeLSTM packs (input, forget_left, forget_right, output,
candidate), each gate a width-d block of the packed weight matrix.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .params import ParamStore


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function via tanh (one ufunc pass)."""
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def log_sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    return -np.logaddexp(0.0, -x)


@dataclass
class StatePair:
    """Hidden/cell vector pair flowing through every recurrent cell."""

    h: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        if self.h.shape != self.c.shape:
            raise ValueError(f"state halves disagree: {self.h.shape} vs {self.c.shape}")

    @staticmethod
    def zeros(d: int) -> "StatePair":
        return StatePair(np.zeros(d), np.zeros(d))


@dataclass
class OpCounter:
    """Instrumented counts of cell applications (one unit per batch row)."""

    lstm: int = 0
    tree: int = 0
    bits: int = 0
    head: int = 0

    @property
    def cells(self) -> int:
        """Recurrent-cell applications; decision heads are tallied apart."""
        return self.lstm + self.tree + self.bits

    @property
    def total(self) -> int:
        return self.cells + self.head

    def reset(self) -> None:
        self.lstm = self.tree = self.bits = self.head = 0


# ---------------------------------------------------------------------------
# deterministic encodings
# ---------------------------------------------------------------------------

def pos_encode(k: int, d: int) -> np.ndarray:
    """Sinusoidal position code: even slots sin(k/10000^(2i/d)), odd cos."""
    if k < 0:
        raise ValueError("position must be nonnegative")
    pairs = np.arange((d + 1) // 2)
    denom = np.power(10000.0, 2.0 * pairs / d)
    enc = np.zeros(d)
    enc[0::2] = np.sin(k / denom)
    enc[1::2] = np.cos(k / denom[: d // 2])
    return enc


_pe_tables: dict[int, np.ndarray] = {}


def pos_encode_table(max_k: int, d: int) -> np.ndarray:
    """Rows 0..max_k of pos_encode, cached and grown on demand."""
    table = _pe_tables.get(d)
    if table is None or table.shape[0] <= max_k:
        size = max(max_k + 1, 2 * (table.shape[0] if table is not None else 64))
        table = np.stack([pos_encode(k, d) for k in range(size)])
        _pe_tables[d] = table
    return table[: max_k + 1]


def bits_encode(row_slice: Sequence[float] | np.ndarray, L: int) -> np.ndarray:
    """Ternary code of an adjacency interval: -1 padding then the raw bits."""
    bits = np.asarray(row_slice, dtype=np.float64)
    b = bits.shape[0]
    if b > L:
        raise ValueError(f"interval of length {b} exceeds compression length {L}")
    out = np.full(L, -1.0)
    if b:
        out[L - b :] = bits
    return out


# ---------------------------------------------------------------------------
# fused kernels (batched, with caches for the backward pass)
# ---------------------------------------------------------------------------

def lstm_forward(W, b, x, h, c):
    d = h.shape[1]
    xh = np.concatenate([x, h], axis=1)
    z = xh @ W + b
    gates = sigmoid(z[:, : 3 * d])
    i = gates[:, :d]
    f = gates[:, d : 2 * d]
    o = gates[:, 2 * d :]
    g = np.tanh(z[:, 3 * d :])
    c2 = f * c + i * g
    tc2 = np.tanh(c2)
    h2 = o * tc2
    return h2, c2, (xh, i, f, o, g, c, tc2)


def lstm_backward(W, cache, dh2, dc2):
    xh, i, f, o, g, c, tc2 = cache
    do = dh2 * tc2
    dc_all = dc2 + dh2 * o * (1.0 - tc2 * tc2)
    dz = np.concatenate(
        [
            dc_all * g * i * (1.0 - i),
            dc_all * c * f * (1.0 - f),
            do * o * (1.0 - o),
            dc_all * i * (1.0 - g * g),
        ],
        axis=1,
    )
    dW = xh.T @ dz
    db = dz.sum(axis=0)
    dxh = dz @ W.T
    d = c.shape[1]
    return dW, db, dxh[:, :d], dxh[:, d:], dc_all * f


def tree_forward(W, b, hl, cl, hr, cr):
    d = hl.shape[1]
    hh = np.concatenate([hl, hr], axis=1)
    z = hh @ W + b
    gates = sigmoid(z[:, : 4 * d])
    i = gates[:, :d]
    fl = gates[:, d : 2 * d]
    fr = gates[:, 2 * d : 3 * d]
    o = gates[:, 3 * d :]
    g = np.tanh(z[:, 4 * d :])
    c2 = i * g + fl * cl + fr * cr
    tc2 = np.tanh(c2)
    h2 = o * tc2
    return h2, c2, (hh, i, fl, fr, o, g, cl, cr, tc2)


def tree_backward(W, cache, dh2, dc2):
    hh, i, fl, fr, o, g, cl, cr, tc2 = cache
    do = dh2 * tc2
    dc_all = dc2 + dh2 * o * (1.0 - tc2 * tc2)
    dz = np.concatenate(
        [
            dc_all * g * i * (1.0 - i),
            dc_all * cl * fl * (1.0 - fl),
            dc_all * cr * fr * (1.0 - fr),
            do * o * (1.0 - o),
            dc_all * i * (1.0 - g * g),
        ],
        axis=1,
    )
    dW = hh.T @ dz
    db = dz.sum(axis=0)
    dhh = dz @ W.T
    d = cl.shape[1]
    return dW, db, dhh[:, :d], dc_all * fl, dhh[:, d:], dc_all * fr


def bits_forward(W, b, codes):
    out = codes @ W + b
    d = out.shape[1] // 2
    return out[:, :d], out[:, d:]


def bern_forward(w, b, h):
    z = h @ w + float(b)
    return z, sigmoid(z)


# ---------------------------------------------------------------------------
# reverse-mode tape
# ---------------------------------------------------------------------------

_tape_ids = itertools.count()


class Var:
    """A tape-tracked array; gradients materialize lazily during backward."""

    __slots__ = ("data", "grad", "tape_id")

    def __init__(self, data: np.ndarray, tape_id: int):
        self.data = data
        self.grad: np.ndarray | None = None
        self.tape_id = tape_id


def _acc(var: Var) -> np.ndarray:
    if var.grad is None:
        var.grad = np.zeros_like(var.data)
    return var.grad


class Tape:
    """Records fused ops on one forward pass and replays them in reverse.

    ``pair_rows`` counts the StatePair rows this tape keeps alive, the
    portable proxy for training memory.
    """

    def __init__(self, params: ParamStore, counter: OpCounter | None = None):
        self.params = params
        self.counter = counter if counter is not None else OpCounter()
        self.ops: list[Callable[[], None]] = []
        self.id = next(_tape_ids)
        self.pair_rows = 0
        self._consumed = False

    # -- variable creation ---------------------------------------------------

    def leaf(self, data: np.ndarray) -> Var:
        return Var(np.asarray(data, dtype=np.float64), self.id)

    def leaf_pair(self, h: np.ndarray, c: np.ndarray) -> tuple[Var, Var]:
        self.pair_rows += np.atleast_2d(h).shape[0]
        return self.leaf(h), self.leaf(c)

    def _new(self, data: np.ndarray) -> Var:
        return Var(data, self.id)

    def _new_pair(self, h: np.ndarray, c: np.ndarray) -> tuple[Var, Var]:
        self.pair_rows += h.shape[0]
        return self._new(h), self._new(c)

    # -- fused ops -------------------------------------------------------------

    def lstm(self, bundle: str, x, h: Var, c: Var) -> tuple[Var, Var]:
        """x is a Var, a ("tok", name) parameter reference, or a constant."""
        params = self.params
        W, b = params[f"{bundle}.W"], params[f"{bundle}.b"]
        B = h.data.shape[0]
        tok_name = None
        x_var = None
        if isinstance(x, Var):
            x_var = x
            x_data = x.data
        elif isinstance(x, tuple) and x[0] == "tok":
            tok_name = x[1]
            x_data = np.broadcast_to(params[tok_name], (B, params.d))
        else:
            x_data = np.asarray(x, dtype=np.float64)
        h2, c2, cache = lstm_forward(W, b, x_data, h.data, c.data)
        out_h, out_c = self._new_pair(h2, c2)
        self.counter.lstm += B

        def backward():
            dh2 = out_h.grad
            dc2 = out_c.grad
            if dh2 is None and dc2 is None:
                return
            if dh2 is None:
                dh2 = np.zeros_like(out_h.data)
            if dc2 is None:
                dc2 = np.zeros_like(out_c.data)
            dW, db, dx, dh, dc = lstm_backward(W, cache, dh2, dc2)
            params.grads[f"{bundle}.W"] += dW
            params.grads[f"{bundle}.b"] += db
            _acc(h)[...] += dh
            _acc(c)[...] += dc
            if x_var is not None:
                _acc(x_var)[...] += dx
            elif tok_name is not None:
                params.grads[tok_name] += dx.sum(axis=0)

        self.ops.append(backward)
        return out_h, out_c

    def tree(self, bundle: str, hl: Var, cl: Var, hr: Var, cr: Var) -> tuple[Var, Var]:
        params = self.params
        W, b = params[f"{bundle}.W"], params[f"{bundle}.b"]
        h2, c2, cache = tree_forward(W, b, hl.data, cl.data, hr.data, cr.data)
        out_h, out_c = self._new_pair(h2, c2)
        self.counter.tree += hl.data.shape[0]

        def backward():
            dh2 = out_h.grad
            dc2 = out_c.grad
            if dh2 is None and dc2 is None:
                return
            if dh2 is None:
                dh2 = np.zeros_like(out_h.data)
            if dc2 is None:
                dc2 = np.zeros_like(out_c.data)
            dW, db, dhl, dcl, dhr, dcr = tree_backward(W, cache, dh2, dc2)
            params.grads[f"{bundle}.W"] += dW
            params.grads[f"{bundle}.b"] += db
            _acc(hl)[...] += dhl
            _acc(cl)[...] += dcl
            _acc(hr)[...] += dhr
            _acc(cr)[...] += dcr

        self.ops.append(backward)
        return out_h, out_c

    def bits(self, codes: np.ndarray) -> tuple[Var, Var]:
        params = self.params
        W, b = params["bits.W"], params["bits.b"]
        codes = np.asarray(codes, dtype=np.float64)
        h, c = bits_forward(W, b, codes)
        out_h, out_c = self._new_pair(h, c)
        self.counter.bits += codes.shape[0]

        def backward():
            dh = out_h.grad
            dc = out_c.grad
            if dh is None and dc is None:
                return
            if dh is None:
                dh = np.zeros_like(out_h.data)
            if dc is None:
                dc = np.zeros_like(out_c.data)
            dout = np.concatenate([dh, dc], axis=1)
            params.grads["bits.W"] += codes.T @ dout
            params.grads["bits.b"] += dout.sum(axis=0)

        self.ops.append(backward)
        return out_h, out_c

    def bern(
        self,
        head: str,
        h: Var,
        pe: np.ndarray | None,
        y: np.ndarray,
        rows: np.ndarray | None = None,
    ) -> tuple[Var, np.ndarray]:
        """Bernoulli log-likelihood rows log p(y | sigma(w.h + b)).

        ``rows`` restricts the op to a subset of the batch rows of ``h``.
        Returns the (B,) log-prob Var and the (B,) probability values.
        """
        params = self.params
        w = params[f"{head}.w"]
        b = params[f"{head}.b"]
        base = h.data if rows is None else h.data[rows]
        hp = base if pe is None else base + pe
        z, p = bern_forward(w, b, hp)
        y = np.asarray(y, dtype=bool)
        ll = log_sigmoid(np.where(y, z, -z))
        out = self._new(ll)
        self.counter.head += z.shape[0]

        def backward():
            dll = out.grad
            if dll is None:
                return
            dz = dll * (y.astype(np.float64) - p)
            if rows is None:
                _acc(h)[...] += dz[:, None] * w
            else:
                np.add.at(_acc(h), rows, dz[:, None] * w)
            params.grads[f"{head}.w"] += hp.T @ dz
            params.grads[f"{head}.b"] += dz.sum()

        self.ops.append(backward)
        return out, p

    def add_pe(self, h: Var, pe: np.ndarray) -> Var:
        """Add a constant positional code to the hidden half of a state."""
        out = self._new(h.data + pe)
        self.pair_rows += h.data.shape[0]

        def backward():
            if out.grad is not None:
                _acc(h)[...] += out.grad

        self.ops.append(backward)
        return out

    def gather(
        self,
        sources: Sequence[tuple[Var, np.ndarray, np.ndarray]],
        B: int,
        d: int,
    ) -> Var:
        """Assemble a (B, d) matrix from rows of other matrices."""
        out = np.zeros((B, d))
        for v, src, dst in sources:
            out[dst] = v.data[src]
        out_var = self._new(out)

        def backward():
            g = out_var.grad
            if g is None:
                return
            for v, src, dst in sources:
                np.add.at(_acc(v), src, g[dst])

        self.ops.append(backward)
        return out_var

    def gather_pair(
        self,
        sources: Sequence[tuple[Var, Var, np.ndarray, np.ndarray]],
        B: int,
        d: int,
    ) -> tuple[Var, Var]:
        """Assemble a (B, d) state batch from rows of other state batches.

        ``sources`` holds (h_var, c_var, src_rows, dst_rows) quadruples;
        destination rows not covered by any source stay zero, which is how
        absent children enter the recursions.
        """
        h = np.zeros((B, d))
        c = np.zeros((B, d))
        for hv, cv, src, dst in sources:
            h[dst] = hv.data[src]
            c[dst] = cv.data[src]
        out_h, out_c = self._new_pair(h, c)

        def backward():
            dh = out_h.grad
            dc = out_c.grad
            for hv, cv, src, dst in sources:
                if dh is not None:
                    np.add.at(_acc(hv), src, dh[dst])
                if dc is not None:
                    np.add.at(_acc(cv), src, dc[dst])

        self.ops.append(backward)
        return out_h, out_c

    def segment_sum(
        self, terms: Sequence[tuple[Var, np.ndarray]], n_segments: int
    ) -> Var:
        """Sum (B,) vars into per-segment totals: out[s] += var[i] per map."""
        out = np.zeros(n_segments)
        for var, seg in terms:
            np.add.at(out, seg, var.data)
        out_var = self._new(out)

        def backward():
            g = out_var.grad
            if g is None:
                return
            for var, seg in terms:
                _acc(var)[...] += g[seg]

        self.ops.append(backward)
        return out_var

    def sum_all(self, terms: Sequence[Var]) -> Var:
        """Collapse a list of (B,) vars into one scalar Var."""
        total = sum(float(v.data.sum()) for v in terms)
        out_var = self._new(np.array(float(total)))

        def backward():
            g = out_var.grad
            if g is None:
                return
            for v in terms:
                _acc(v)[...] += g

        self.ops.append(backward)
        return out_var

    # -- reverse sweep ---------------------------------------------------------

    def backward(self, seeds: Iterable[tuple[Var, np.ndarray | float]]) -> None:
        """Run reverse accumulation from seed gradients.

        Ops replay in exact reverse order of recording; parameter gradients
        accumulate into ``params.grads``. A tape can be consumed once.
        """
        if self._consumed:
            raise RuntimeError("tape has already been consumed by a backward pass")
        seeded = False
        for var, g in seeds:
            if not isinstance(var, Var) or var.tape_id != self.id:
                raise ValueError("backward seed does not belong to this tape")
            _acc(var)[...] += g
            seeded = True
        if not seeded:
            raise ValueError("backward requires at least one recorded seed")
        for fn in reversed(self.ops):
            fn()
        self._consumed = True


def backward(tape: Tape, loss: Var, grad: float = 1.0) -> None:
    """Reverse accumulation of d(loss)/d(theta) into the parameter buffers."""
    tape.backward([(loss, grad)])


# ---------------------------------------------------------------------------
# public single-state ops (value mode)
# ---------------------------------------------------------------------------

def _check_dim(params: ParamStore, vec: np.ndarray, what: str) -> None:
    if vec.shape != (params.d,):
        raise ValueError(f"{what}: expected shape ({params.d},), got {vec.shape}")


def lstm_cell(prev: StatePair, x: np.ndarray, params: ParamStore, bundle: str = "desc_cell") -> StatePair:
    """Standard LSTM gate equations on a single state."""
    x = np.asarray(x, dtype=np.float64)
    _check_dim(params, x, "lstm input")
    _check_dim(params, prev.h, "lstm state")
    h2, c2, _ = lstm_forward(
        params[f"{bundle}.W"], params[f"{bundle}.b"], x[None], prev.h[None], prev.c[None]
    )
    return StatePair(h2[0], c2[0])


def tree_cell(left: StatePair, right: StatePair, which: str, params: ParamStore) -> StatePair:
    """Binary TreeLSTM with per-child forget gates."""
    if which not in ("bot", "top", "row"):
        raise ValueError(f"unknown tree cell {which!r}")
    _check_dim(params, left.h, "tree left")
    _check_dim(params, right.h, "tree right")
    bundle = f"tree_{which}"
    h2, c2, _ = tree_forward(
        params[f"{bundle}.W"], params[f"{bundle}.b"],
        left.h[None], left.c[None], right.h[None], right.c[None],
    )
    return StatePair(h2[0], c2[0])


_HEAD_NAMES = {"left": "head_left", "right": "head_right", "gate": "row_gate"}


def bernoulli_head(state: StatePair, which: str, params: ParamStore) -> float:
    """Branch/gate probability sigma(w.h + b), strictly inside (0, 1)."""
    if which not in _HEAD_NAMES:
        raise ValueError(f"unknown head {which!r}")
    _check_dim(params, state.h, "head input")
    name = _HEAD_NAMES[which]
    _, p = bern_forward(params[f"{name}.w"], params[f"{name}.b"], state.h[None])
    return float(p[0])


def bits_embed(code: np.ndarray, params: ParamStore) -> StatePair:
    """Affine map from a ternary interval code to a StatePair."""
    code = np.asarray(code, dtype=np.float64)
    if code.shape != (params.L,):
        raise ValueError(f"expected code of length {params.L}, got {code.shape}")
    if not np.isin(code, (-1.0, 0.0, 1.0)).all():
        raise ValueError("code entries must be in {-1, 0, 1}")
    h, c = bits_forward(params["bits.W"], params["bits.b"], code[None])
    return StatePair(h[0], c[0])
