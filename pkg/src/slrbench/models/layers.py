"""Layer primitives with explicit backward passes: LSTM recurrence, attention, encodings."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ParameterError
from ..numerics import sigmoid, softmax


def positional_encoding(length: int, dim: int, dtype=np.float64) -> np.ndarray:
    """Sinusoidal table: even columns ``sin(pos / 10000^(2i/d))``, odd columns the cosine."""
    if dim % 2:
        raise ParameterError(f"positional encoding needs an even width, got {dim}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    rate = np.power(10000.0, -np.arange(0, dim, 2, dtype=np.float64) / dim)
    pe = np.empty((length, dim))
    pe[:, 0::2] = np.sin(pos * rate)
    pe[:, 1::2] = np.cos(pos * rate)
    return pe.astype(dtype)


# ---------------------------------------------------------------- LSTM

def _gates(a, hidden):
    i = sigmoid(a[..., :hidden])
    f = sigmoid(a[..., hidden : 2 * hidden])
    g = np.tanh(a[..., 2 * hidden : 3 * hidden])
    o = sigmoid(a[..., 3 * hidden :])
    return i, f, g, o


def lstm_cell(x, h, c, W, U, b):
    """One step with gate blocks ordered (input, forget, candidate, output)."""
    i, f, g, o = _gates(x @ W + h @ U + b, U.shape[0])
    c_next = f * c + i * g
    return o * np.tanh(c_next), c_next


def lstm_forward(xs, W, U, b):
    """Run over ``xs`` of shape ``[B, T, d_in]`` from zero state; returns final h and a cache."""
    batch, steps, _ = xs.shape
    hidden = U.shape[0]
    proj = xs @ W + b
    h = np.zeros((batch, hidden), dtype=xs.dtype)
    c = np.zeros_like(h)
    hs, cs, gates = [h], [c], []
    for t in range(steps):
        i, f, g, o = _gates(proj[:, t] + h @ U, hidden)
        c = f * c + i * g
        h = o * np.tanh(c)
        hs.append(h)
        cs.append(c)
        gates.append((i, f, g, o))
    return h, (xs, hs, cs, gates)


def lstm_backward(cache, dh_last, W, U):
    """Backpropagation through time.  Returns ``(dxs, dW, dU, db)``."""
    xs, hs, cs, gates = cache
    batch, steps, _ = xs.shape
    dproj = np.empty((batch, steps, 4 * U.shape[0]), dtype=xs.dtype)
    dU = np.zeros_like(U)
    dh = dh_last
    dc = np.zeros_like(dh_last)
    for t in reversed(range(steps)):
        i, f, g, o = gates[t]
        tc = np.tanh(cs[t + 1])
        do = dh * tc
        dc = dc + dh * o * (1 - tc * tc)
        da = np.concatenate([
            dc * g * i * (1 - i),
            dc * cs[t] * f * (1 - f),
            dc * i * (1 - g * g),
            do * o * (1 - o),
        ], axis=1)
        dc = dc * f
        dU += hs[t].T @ da
        dh = da @ U.T
        dproj[:, t] = da
    flat_x = xs.reshape(-1, xs.shape[2])
    flat_d = dproj.reshape(-1, dproj.shape[2])
    return dproj @ W.T, flat_x.T @ flat_d, dU, flat_d.sum(axis=0)


# ---------------------------------------------------------------- attention

def _split(x, heads):
    b, t, d = x.shape
    return x.reshape(b, t, heads, d // heads).transpose(0, 2, 1, 3)


def _merge(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def multi_head_attention(q_in, k_in, v_in, p: dict, heads: int):
    """Scaled dot-product attention over ``heads`` heads on ``[B, T, D]`` inputs.

    ``p`` holds ``Wq, bq, Wk, bk, Wv, bv, Wo, bo``.  Returns ``(out, cache)``;
    ``cache["weights"]`` is the ``[B, heads, T, T]`` attention matrix.
    """
    q = _split(q_in @ p["Wq"] + p["bq"], heads)
    k = _split(k_in @ p["Wk"] + p["bk"], heads)
    v = _split(v_in @ p["Wv"] + p["bv"], heads)
    scale = 1.0 / math.sqrt(q.shape[-1])
    weights = softmax((q @ k.transpose(0, 1, 3, 2)) * scale, axis=-1)
    ctx = _merge(weights @ v)
    out = ctx @ p["Wo"] + p["bo"]
    cache = {"inputs": (q_in, k_in, v_in), "q": q, "k": k, "v": v, "weights": weights,
             "ctx": ctx, "scale": scale}
    return out, cache


def multi_head_attention_backward(cache, dout, p: dict, heads: int):
    """Returns ``(dq_in, dk_in, dv_in, grads)`` with grads keyed like ``p``."""
    q_in, k_in, v_in = cache["inputs"]
    q, k, v, weights, scale = cache["q"], cache["k"], cache["v"], cache["weights"], cache["scale"]
    d = q_in.shape[-1]
    grads = {
        "Wo": cache["ctx"].reshape(-1, d).T @ dout.reshape(-1, d),
        "bo": dout.reshape(-1, d).sum(axis=0),
    }
    dctx = _split(dout @ p["Wo"].T, heads)
    dweights = dctx @ v.transpose(0, 1, 3, 2)
    dv = weights.transpose(0, 1, 3, 2) @ dctx
    dscores = weights * (dweights - (dweights * weights).sum(axis=-1, keepdims=True)) * scale
    dq = dscores @ k
    dk = dscores.transpose(0, 1, 3, 2) @ q
    dins = []
    for name, x_in, dproj in (("q", q_in, dq), ("k", k_in, dk), ("v", v_in, dv)):
        dflat = _merge(dproj)
        grads["W" + name] = x_in.reshape(-1, d).T @ dflat.reshape(-1, d)
        grads["b" + name] = dflat.reshape(-1, d).sum(axis=0)
        dins.append(dflat @ p["W" + name].T)
    return dins[0], dins[1], dins[2], grads
