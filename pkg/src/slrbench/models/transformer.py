"""Post-norm Transformer encoder with mean pooling over frames."""

from __future__ import annotations

import numpy as np

from ..numerics import Rng, dropout_mask, guard, layer_norm, layer_norm_backward
from .config import ModelConfig
from .layers import multi_head_attention, multi_head_attention_backward, positional_encoding

LN_EPS = 1e-5


def _attn_params(params, prefix):
    return {key: params[prefix + "attn." + key] for key in
            ("Wq", "bq", "Wk", "bk", "Wv", "bv", "Wo", "bo")}


def _mask(shape, cfg, training, rng, dtype):
    if training and cfg.dropout > 0:
        return dropout_mask(shape, cfg.dropout, rng, dtype)
    return None


def forward(params: dict, cfg: ModelConfig, x: np.ndarray, training: bool = False,
            rng: Rng | None = None):
    batch, steps, _ = x.shape
    h = x @ params["embed.W"] + params["embed.b"]
    if cfg.positional_encoding:
        h = h + positional_encoding(steps, cfg.model_dim, h.dtype)
    layer_caches = []
    for layer in range(cfg.layers):
        p = f"layer{layer}."
        attn, attn_cache = multi_head_attention(h, h, h, _attn_params(params, p), cfg.heads)
        m1 = _mask(attn.shape, cfg, training, rng, attn.dtype)
        r1 = h + (attn if m1 is None else attn * m1)
        h1 = layer_norm(r1, params[p + "ln1.gain"], params[p + "ln1.shift"], LN_EPS)
        z = h1 @ params[p + "ffn.W1"] + params[p + "ffn.b1"]
        a = np.maximum(z, 0)
        f = a @ params[p + "ffn.W2"] + params[p + "ffn.b2"]
        m2 = _mask(f.shape, cfg, training, rng, f.dtype)
        r2 = h1 + (f if m2 is None else f * m2)
        h = layer_norm(r2, params[p + "ln2.gain"], params[p + "ln2.shift"], LN_EPS)
        layer_caches.append((attn_cache, m1, r1, h1, z, a, m2, r2))
    pooled = h.mean(axis=1)
    logits = guard(pooled @ params["head.W"] + params["head.b"], "transformer logits")
    return logits, (x, layer_caches, pooled, steps)


def backward(params: dict, cfg: ModelConfig, cache, dlogits: np.ndarray) -> dict:
    x, layer_caches, pooled, steps = cache
    grads = {"head.W": pooled.T @ dlogits, "head.b": dlogits.sum(axis=0)}
    dpool = dlogits @ params["head.W"].T
    dh = np.repeat(dpool[:, None, :] / steps, steps, axis=1)
    for layer in reversed(range(cfg.layers)):
        p = f"layer{layer}."
        attn_cache, m1, r1, h1, z, a, m2, r2 = layer_caches[layer]
        dr2, grads[p + "ln2.gain"], grads[p + "ln2.shift"] = layer_norm_backward(
            r2, params[p + "ln2.gain"], dh, LN_EPS)
        df = dr2 if m2 is None else dr2 * m2
        d = df.shape[-1]
        grads[p + "ffn.W2"] = a.reshape(-1, a.shape[-1]).T @ df.reshape(-1, d)
        grads[p + "ffn.b2"] = df.reshape(-1, d).sum(axis=0)
        dz = (df @ params[p + "ffn.W2"].T) * (z > 0)
        grads[p + "ffn.W1"] = h1.reshape(-1, d).T @ dz.reshape(-1, dz.shape[-1])
        grads[p + "ffn.b1"] = dz.reshape(-1, dz.shape[-1]).sum(axis=0)
        dh1 = dr2 + dz @ params[p + "ffn.W1"].T
        dr1, grads[p + "ln1.gain"], grads[p + "ln1.shift"] = layer_norm_backward(
            r1, params[p + "ln1.gain"], dh1, LN_EPS)
        dattn = dr1 if m1 is None else dr1 * m1
        dq, dk, dv, agrads = multi_head_attention_backward(
            attn_cache, dattn, _attn_params(params, p), cfg.heads)
        for key, value in agrads.items():
            grads[p + "attn." + key] = value
        dh = dr1 + dq + dk + dv
    grads["embed.W"] = x.reshape(-1, x.shape[-1]).T @ dh.reshape(-1, dh.shape[-1])
    grads["embed.b"] = dh.reshape(-1, dh.shape[-1]).sum(axis=0)
    return grads
