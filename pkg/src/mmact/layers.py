"""Parametric building blocks: affine layer, LSTM cell, FC-Pool, BPTT.

Every forward has a paired backward computing exact reverse-mode gradients;
correctness is enforced by the finite-difference suite in tests. All
operations take batches of row vectors: a (B, d) array is B independent rows,
and B = 1 recovers the single-vector contract.

The LSTM cell packs the four gate transforms into one weight matrix of shape
(input_size + hidden_size, 4 * hidden_size), gate order [input, forget,
output, candidate]. Column block k of the packed matrix is gate k's weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .numerics import logistic


# ---------------------------------------------------------------------------
# Affine layer
# ---------------------------------------------------------------------------

@dataclass
class AffineLayer:
    """y = x @ W.T + b with W of shape (out, in) and b of shape (1, out)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(1, -1)
        if self.weight.ndim != 2:
            raise ValueError("affine weight must be 2-D")
        if self.bias.shape[1] != self.weight.shape[0]:
            raise ValueError(
                f"bias width {self.bias.shape[1]} does not match weight rows {self.weight.shape[0]}"
            )

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def init(cls, rng: np.random.Generator, in_dim: int, out_dim: int) -> "AffineLayer":
        r = 1.0 / np.sqrt(in_dim)
        return cls(weight=rng.uniform(-r, r, size=(out_dim, in_dim)), bias=np.zeros((1, out_dim)))


def affine_forward(layer: AffineLayer, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x))
    if x.shape[1] != layer.in_dim:
        raise ValueError(f"affine input width {x.shape[1]}, expected {layer.in_dim}")
    return x @ layer.weight.T + layer.bias


def affine_backward(layer: AffineLayer, x: np.ndarray, d_out: np.ndarray):
    """Returns (d_x, d_weight, d_bias) for upstream gradient d_out (B, out)."""
    x = np.atleast_2d(x)
    d_out = np.atleast_2d(d_out)
    d_x = d_out @ layer.weight
    d_w = d_out.T @ x
    d_b = d_out.sum(axis=0, keepdims=True)
    return d_x, d_w, d_b


# ---------------------------------------------------------------------------
# LSTM cell
# ---------------------------------------------------------------------------

@dataclass
class LSTMCell:
    input_size: int
    hidden_size: int
    weight: np.ndarray  # (input_size + hidden_size, 4 * hidden_size)
    bias: np.ndarray    # (1, 4 * hidden_size)

    def __post_init__(self):
        expected = (self.input_size + self.hidden_size, 4 * self.hidden_size)
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(1, -1)
        if self.weight.shape != expected:
            raise ValueError(f"LSTM weight shape {self.weight.shape}, expected {expected}")
        if self.bias.shape[1] != 4 * self.hidden_size:
            raise ValueError("LSTM bias width must be 4 * hidden_size")

    @classmethod
    def init(cls, rng: np.random.Generator, input_size: int, hidden_size: int) -> "LSTMCell":
        fan_in = input_size + hidden_size
        r = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-r, r, size=(fan_in, 4 * hidden_size))
        b = np.zeros((1, 4 * hidden_size))
        b[0, hidden_size:2 * hidden_size] = 1.0  # forget gate bias
        return cls(input_size=input_size, hidden_size=hidden_size, weight=w, bias=b)


@dataclass
class LSTMState:
    hidden: np.ndarray  # (B, hidden_size)
    cell: np.ndarray    # (B, hidden_size)

    def copy(self) -> "LSTMState":
        return LSTMState(self.hidden.copy(), self.cell.copy())


def zero_state(cell: LSTMCell, batch: int = 1) -> LSTMState:
    h = np.zeros((batch, cell.hidden_size))
    return LSTMState(hidden=h, cell=h.copy())


class LSTMStepCache(NamedTuple):
    xh: np.ndarray      # (B, input + hidden), the concatenated step input
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    tc: np.ndarray      # tanh(c), reused by the backward pass


def lstm_step(cell: LSTMCell, x: np.ndarray, state: LSTMState):
    """One LSTM update. Returns (output, next_state); output is the new hidden."""
    out, new_state, _ = lstm_step_cached(cell, x, state)
    return out, new_state


def lstm_step_cached(cell: LSTMCell, x: np.ndarray, state: LSTMState, check: bool = True):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if check:
        if x.shape[1] != cell.input_size:
            raise ValueError(f"LSTM input width {x.shape[1]}, expected {cell.input_size}")
        if not (np.all(np.isfinite(state.hidden)) and np.all(np.isfinite(state.cell))):
            raise ValueError("non-finite LSTM state")
    H = cell.hidden_size
    xh = np.concatenate([x, state.hidden], axis=1)
    z = xh @ cell.weight
    z += cell.bias
    # logistic over the three gate blocks via tanh, on a contiguous buffer
    gates = z[:, :3 * H] * 0.5
    np.tanh(gates, out=gates)
    gates += 1.0
    gates *= 0.5
    i = gates[:, :H]
    f = gates[:, H:2 * H]
    o = gates[:, 2 * H:3 * H]
    g = np.tanh(z[:, 3 * H:])
    c = f * state.cell + i * g
    tc = np.tanh(c)
    h = o * tc
    cache = LSTMStepCache(xh=xh, c_prev=state.cell, i=i, f=f, o=o, g=g, c=c, tc=tc)
    return h, LSTMState(hidden=h, cell=c), cache


def lstm_step_backward(cell: LSTMCell, cache: LSTMStepCache, d_h: np.ndarray, d_c: np.ndarray):
    """Backward through one step.

    d_h, d_c are gradients w.r.t. the step's output hidden and cell state
    (d_c carries the recurrent cell-path gradient from the next step).
    Returns (d_x, d_h_prev, d_c_prev, d_weight, d_bias).
    """
    H = cell.hidden_size
    tc = cache.tc
    d_o = d_h * tc
    d_c_total = d_c + d_h * cache.o * (1.0 - tc * tc)
    d_c_prev = d_c_total * cache.f
    # through the gate nonlinearities
    dz = np.empty((d_h.shape[0], 4 * H))
    np.multiply(d_c_total * cache.g, cache.i * (1.0 - cache.i), out=dz[:, :H])
    np.multiply(d_c_total * cache.c_prev, cache.f * (1.0 - cache.f), out=dz[:, H:2 * H])
    np.multiply(d_o, cache.o * (1.0 - cache.o), out=dz[:, 2 * H:3 * H])
    np.multiply(d_c_total * cache.i, 1.0 - cache.g * cache.g, out=dz[:, 3 * H:])
    d_w = cache.xh.T @ dz
    d_b = dz.sum(axis=0, keepdims=True)
    d_xh = dz @ cell.weight.T
    d_x = d_xh[:, :cell.input_size]
    d_h_prev = d_xh[:, cell.input_size:]
    return d_x, d_h_prev, d_c_prev, d_w, d_b


def lstm_forward_sequence(cell: LSTMCell, xs: np.ndarray, state: LSTMState | None = None):
    """Unroll over time. xs is (B, T, input_size); returns (hs, caches).

    hs is (B, T, hidden_size); caches feed bptt_backward.
    """
    xs = np.asarray(xs, dtype=np.float64)
    B, T, _ = xs.shape
    st = state if state is not None else zero_state(cell, B)
    hs = np.empty((B, T, cell.hidden_size))
    caches = []
    for t in range(T):
        h, st, cache = lstm_step_cached(cell, xs[:, t, :], st)
        hs[:, t, :] = h
        caches.append(cache)
    return hs, caches


def bptt_backward(cell: LSTMCell, caches: list, d_hs: np.ndarray):
    """Exact reverse-mode gradients through an unrolled LSTM.

    d_hs is (B, T, hidden_size), the per-step upstream gradient on each
    output hidden state. Returns (d_xs, d_weight, d_bias).
    """
    T = len(caches)
    d_hs = np.asarray(d_hs, dtype=np.float64)
    if d_hs.shape[1] != T:
        raise ValueError(f"got {d_hs.shape[1]} upstream steps for {T} forward records")
    B = d_hs.shape[0]
    d_xs = np.empty((B, T, cell.input_size))
    d_w = np.zeros_like(cell.weight)
    d_b = np.zeros_like(cell.bias)
    d_h_rec = np.zeros((B, cell.hidden_size))
    d_c_rec = np.zeros((B, cell.hidden_size))
    for t in range(T - 1, -1, -1):
        d_x, d_h_rec, d_c_rec, dw_t, db_t = lstm_step_backward(
            cell, caches[t], d_hs[:, t, :] + d_h_rec, d_c_rec
        )
        d_xs[:, t, :] = d_x
        d_w += dw_t
        d_b += db_t
    return d_xs, d_w, d_b


# ---------------------------------------------------------------------------
# FC-Pool: stacked (K, H) rows flattened and mapped back to a single H-vector,
# parameters shared across all time steps.
# ---------------------------------------------------------------------------

def fc_pool_forward(layer: AffineLayer, stacked: np.ndarray) -> np.ndarray:
    """Flatten stacked rows row-major, then affine. stacked is (K, H) or (B, K, H)."""
    stacked = np.asarray(stacked)
    if stacked.ndim == 2:
        flat = stacked.reshape(1, -1)
    elif stacked.ndim == 3:
        flat = stacked.reshape(stacked.shape[0], -1)
    else:
        raise ValueError("fc_pool input must be (K, H) or (B, K, H)")
    return affine_forward(layer, flat)


def fc_pool_backward(layer: AffineLayer, stacked: np.ndarray, d_out: np.ndarray):
    """Returns (d_stacked, d_weight, d_bias) with d_stacked shaped like stacked."""
    stacked = np.asarray(stacked)
    shape = stacked.shape
    flat = stacked.reshape(1, -1) if stacked.ndim == 2 else stacked.reshape(shape[0], -1)
    d_flat, d_w, d_b = affine_backward(layer, flat, d_out)
    return d_flat.reshape(shape), d_w, d_b
