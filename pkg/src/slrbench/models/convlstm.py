"""Per-frame 3x3 convolution over the landmark grid, followed by a single LSTM layer."""

from __future__ import annotations

import numpy as np

from ..numerics import Rng, conv2d_same, conv2d_same_backward, dropout_mask, guard
from .config import ModelConfig, grid_shape
from .layers import lstm_backward, lstm_forward


def forward(params: dict, cfg: ModelConfig, x: np.ndarray, training: bool = False,
            rng: Rng | None = None):
    """Logits ``[B, num_classes]`` and a cache for :func:`backward`."""
    batch, steps, _ = x.shape
    grid = x.reshape((batch * steps,) + grid_shape())
    pre = conv2d_same(grid, params["conv.kernel"], params["conv.bias"])
    act = np.maximum(pre, 0)
    feats = act.reshape(batch, steps, -1)
    h_last, lstm_cache = lstm_forward(feats, params["lstm.W"], params["lstm.U"], params["lstm.b"])
    mask = None
    if training and cfg.dropout > 0:
        mask = dropout_mask(h_last.shape, cfg.dropout, rng, h_last.dtype)
        h_last = h_last * mask
    logits = guard(h_last @ params["head.W"] + params["head.b"], "convlstm logits")
    return logits, (grid, pre, lstm_cache, mask, h_last)


def backward(params: dict, cfg: ModelConfig, cache, dlogits: np.ndarray) -> dict:
    grid, pre, lstm_cache, mask, h_used = cache
    grads = {"head.W": h_used.T @ dlogits, "head.b": dlogits.sum(axis=0)}
    dh = dlogits @ params["head.W"].T
    if mask is not None:
        dh = dh * mask
    dfeats, grads["lstm.W"], grads["lstm.U"], grads["lstm.b"] = lstm_backward(
        lstm_cache, dh, params["lstm.W"], params["lstm.U"])
    dpre = dfeats.reshape(pre.shape) * (pre > 0)
    _, grads["conv.kernel"], grads["conv.bias"] = conv2d_same_backward(grid, params["conv.kernel"], dpre)
    return grads
