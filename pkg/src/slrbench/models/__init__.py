"""The two sequence classifiers behind one contract: ``[B, T, 63]`` frames to ``[B, K]`` logits."""

from __future__ import annotations

import numpy as np

from ..datapipe.io import FEAT_DIM
from ..errors import DimensionError
from ..numerics import Rng
from . import convlstm, transformer
from .checkpoint import load_checkpoint, save_checkpoint
from .config import KINDS, ModelConfig, glorot_bound, init_params, param_count, param_shapes
from .layers import lstm_cell, multi_head_attention, positional_encoding

_IMPL = {"convlstm": convlstm, "transformer": transformer}


def _check_input(x):
    if x.ndim != 3 or x.shape[2] != FEAT_DIM or x.shape[1] < 1 or x.shape[0] < 1:
        raise DimensionError(f"expected a [B, T, {FEAT_DIM}] batch, got {x.shape}")


def forward(params: dict, cfg: ModelConfig, x: np.ndarray, training: bool = False,
            rng: Rng | None = None):
    """Return ``(logits, cache)``."""
    _check_input(x)
    return _IMPL[cfg.kind].forward(params, cfg, x, training, rng)


def predict(params: dict, cfg: ModelConfig, x: np.ndarray) -> np.ndarray:
    return forward(params, cfg, x, training=False)[0]


def backward(params: dict, cfg: ModelConfig, cache, dlogits: np.ndarray) -> dict:
    return _IMPL[cfg.kind].backward(params, cfg, cache, dlogits)
