"""Model hyperparameters, parameter shape manifests and initialisation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..datapipe.io import FEAT_DIM, NUM_LANDMARKS
from ..errors import ConfigError
from ..numerics import Rng

KINDS = ("convlstm", "transformer")


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "transformer"
    num_classes: int = 100
    conv_filters: int = 128
    lstm_units: int = 256
    layers: int = 6
    heads: int = 8
    model_dim: int = 512
    ffn_dim: int = 2048
    dropout: float = 0.3
    positional_encoding: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"model.kind must be one of {KINDS}, got {self.kind!r}")
        for name in ("num_classes", "conv_filters", "lstm_units", "layers", "heads", "model_dim", "ffn_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be positive")
        if self.model_dim % self.heads:
            raise ConfigError(f"model.model_dim {self.model_dim} is not divisible by model.heads {self.heads}")
        if self.model_dim % 2:
            raise ConfigError("model.model_dim must be even for sinusoidal positional encoding")
        if not 0 <= self.dropout < 1:
            raise ConfigError("model.dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Ordered name -> shape manifest, determined entirely by the config."""
    k = cfg.num_classes
    if cfg.kind == "convlstm":
        f, h = cfg.conv_filters, cfg.lstm_units
        return {
            "conv.kernel": (3, 3, 1, f),
            "conv.bias": (f,),
            "lstm.W": (FEAT_DIM * f, 4 * h),
            "lstm.U": (h, 4 * h),
            "lstm.b": (4 * h,),
            "head.W": (h, k),
            "head.b": (k,),
        }
    d, ff = cfg.model_dim, cfg.ffn_dim
    shapes = {"embed.W": (FEAT_DIM, d), "embed.b": (d,)}
    for layer in range(cfg.layers):
        p = f"layer{layer}."
        for proj in ("q", "k", "v", "o"):
            shapes[p + f"attn.W{proj}"] = (d, d)
            shapes[p + f"attn.b{proj}"] = (d,)
        shapes[p + "ln1.gain"] = (d,)
        shapes[p + "ln1.shift"] = (d,)
        shapes[p + "ffn.W1"] = (d, ff)
        shapes[p + "ffn.b1"] = (ff,)
        shapes[p + "ffn.W2"] = (ff, d)
        shapes[p + "ffn.b2"] = (d,)
        shapes[p + "ln2.gain"] = (d,)
        shapes[p + "ln2.shift"] = (d,)
    shapes["head.W"] = (d, k)
    shapes["head.b"] = (k,)
    return shapes


def glorot_bound(shape: tuple[int, ...]) -> float:
    if len(shape) == 4:
        receptive = shape[0] * shape[1]
        fan_in, fan_out = receptive * shape[2], receptive * shape[3]
    else:
        fan_in, fan_out = shape
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_params(cfg: ModelConfig, rng: Rng, dtype=np.float32) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases, unit layer-norm gains, LSTM forget bias 1."""
    params = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[1]
        if leaf == "gain":
            value = np.ones(shape)
        elif len(shape) == 1:
            value = np.zeros(shape)
            if name == "lstm.b":
                h = cfg.lstm_units
                value[h : 2 * h] = 1.0
        else:
            bound = glorot_bound(shape)
            value = rng.child(name).uniform(-bound, bound, shape)
        params[name] = value.astype(dtype)
    return params


def param_count(cfg: ModelConfig) -> int:
    return sum(math.prod(s) for s in param_shapes(cfg).values())


def grid_shape() -> tuple[int, int, int]:
    """Per-frame landmark grid fed to the convolution: 21 landmarks x 3 coordinates x 1 channel."""
    return NUM_LANDMARKS, 3, 1
