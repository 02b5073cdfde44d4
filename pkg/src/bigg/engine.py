"""Execution engines sharing one op surface.

``ValueOps`` runs the kernels on bare vectors (sampling, value-only
sweeps); ``TapeOps`` runs them through a recording tape so gradients can
be accumulated afterwards. Tree walkers and the prefix forest are written
against this surface once and work in either mode.
"""
from __future__ import annotations

import math

import numpy as np

from .cells import (
    OpCounter,
    StatePair,
    Tape,
    Var,
    bern_forward,
    log_sigmoid,
    pos_encode,
    sigmoid,
)
from .params import ParamStore

_HEADS = {"gate": "row_gate", "left": "head_left", "right": "head_right"}

_pe_cache: dict[tuple[int, int], np.ndarray] = {}


def _pe(k: int, d: int) -> np.ndarray:
    vec = _pe_cache.get((d, k))
    if vec is None:
        vec = pos_encode(k, d)
        _pe_cache[(d, k)] = vec
    return vec


def _scalar_sigmoid(z: float) -> float:
    return 0.5 * (1.0 + math.tanh(0.5 * z))


class _PECache:
    def __init__(self, d: int):
        self.d = d

    def __call__(self, k: int) -> np.ndarray:
        return _pe(k, self.d)


class ValueOps:
    """Forward-only engine on 1-D float64 states."""

    def __init__(
        self,
        params: ParamStore,
        counter: OpCounter | None = None,
        share_summary_lstm: bool = False,
    ):
        self.params = params
        self.counter = counter if counter is not None else OpCounter()
        self.pe = _PECache(params.d)
        self.summary_bundle = "desc_cell" if share_summary_lstm else "seq_cell"
        self._zero = StatePair.zeros(params.d)

    def zero_state(self) -> StatePair:
        return self._zero

    def _lstm(self, bundle: str, x: np.ndarray, s: StatePair) -> StatePair:
        p = self.params
        d = p.d
        z = np.concatenate([x, s.h]) @ p[f"{bundle}.W"] + p[f"{bundle}.b"]
        gates = sigmoid(z[: 3 * d])
        g = np.tanh(z[3 * d :])
        c2 = gates[d : 2 * d] * s.c + gates[:d] * g
        self.counter.lstm += 1
        return StatePair(gates[2 * d : 3 * d] * np.tanh(c2), c2)

    def lstm_tok(self, tok: str, s: StatePair) -> StatePair:
        return self._lstm("desc_cell", self.params[tok], s)

    def lstm_in(self, x_state: StatePair, s: StatePair) -> StatePair:
        return self._lstm(self.summary_bundle, x_state.h, s)

    def tree(self, which: str, sl: StatePair, sr: StatePair) -> StatePair:
        p = self.params
        d = p.d
        z = np.concatenate([sl.h, sr.h]) @ p[f"tree_{which}.W"] + p[f"tree_{which}.b"]
        gates = sigmoid(z[: 4 * d])
        g = np.tanh(z[4 * d :])
        c2 = gates[:d] * g + gates[d : 2 * d] * sl.c + gates[2 * d : 3 * d] * sr.c
        self.counter.tree += 1
        return StatePair(gates[3 * d : 4 * d] * np.tanh(c2), c2)

    def bits(self, code: np.ndarray) -> StatePair:
        p = self.params
        out = code @ p["bits.W"] + p["bits.b"]
        self.counter.bits += 1
        return StatePair(out[: p.d], out[p.d :])

    def _z(self, head: str, s: StatePair, pe_k: int | None) -> float:
        p = self.params
        h = s.h if pe_k is None else s.h + self.pe(pe_k)
        self.counter.head += 1
        return float(h @ p[f"{_HEADS[head]}.w"]) + float(p[f"{_HEADS[head]}.b"])

    def head_prob(self, head: str, s: StatePair, pe_k: int | None) -> float:
        return _scalar_sigmoid(self._z(head, s, pe_k))

    def head_ll(self, head: str, s: StatePair, pe_k: int | None, y: bool) -> tuple[float, float]:
        z = self._z(head, s, pe_k)
        p = _scalar_sigmoid(z)
        ll = float(log_sigmoid(z if y else -z))
        return ll, p

    def add_pe(self, s: StatePair, k: int) -> StatePair:
        return StatePair(s.h + self.pe(k), s.c)


class TapeOps:
    """Recording engine; states are (h, c) Var pairs of shape (1, d)."""

    def __init__(self, tape: Tape, share_summary_lstm: bool = False):
        self.tape = tape
        self.params = tape.params
        self.pe = _PECache(tape.params.d)
        self.summary_bundle = "desc_cell" if share_summary_lstm else "seq_cell"
        self.factors: list[Var] = []
        d = tape.params.d
        self._zero = tape.leaf_pair(np.zeros((1, d)), np.zeros((1, d)))

    def zero_state(self) -> tuple[Var, Var]:
        return self._zero

    def lstm_tok(self, tok: str, s: tuple[Var, Var]) -> tuple[Var, Var]:
        return self.tape.lstm("desc_cell", ("tok", tok), s[0], s[1])

    def lstm_in(self, x_state: tuple[Var, Var], s: tuple[Var, Var]) -> tuple[Var, Var]:
        return self.tape.lstm(self.summary_bundle, x_state[0], s[0], s[1])

    def tree(self, which: str, sl: tuple[Var, Var], sr: tuple[Var, Var]) -> tuple[Var, Var]:
        return self.tape.tree(f"tree_{which}", sl[0], sl[1], sr[0], sr[1])

    def bits(self, code: np.ndarray) -> tuple[Var, Var]:
        return self.tape.bits(code[None])

    def head_prob(self, head: str, s: tuple[Var, Var], pe_k: int | None) -> float:
        p = self.params
        h = s[0].data[0] if pe_k is None else s[0].data[0] + self.pe(pe_k)
        _, prob = bern_forward(p[f"{_HEADS[head]}.w"], p[f"{_HEADS[head]}.b"], h[None])
        return float(prob[0])

    def head_ll(self, head: str, s: tuple[Var, Var], pe_k: int | None, y: bool) -> tuple[float, float]:
        pe = None if pe_k is None else self.pe(pe_k)[None]
        ll_var, probs = self.tape.bern(
            _HEADS[head], s[0], pe, np.array([y], dtype=bool)
        )
        self.factors.append(ll_var)
        return float(ll_var.data[0]), float(probs[0])

    def add_pe(self, s: tuple[Var, Var], k: int) -> tuple[Var, Var]:
        return self.tape.add_pe(s[0], self.pe(k)[None]), s[1]

    def total(self) -> Var:
        """Scalar Var summing every recorded log-likelihood factor."""
        return self.tape.sum_all(self.factors)
