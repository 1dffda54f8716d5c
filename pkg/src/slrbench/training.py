"""Optimisation protocol: smoothed loss, AdamW, clipping, cyclical LR, curriculum, early stopping."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import models
from .datapipe import augment, prepare_eval, prepare_train, stack
from .datapipe.io import LandmarkSequence
from .datapipe.preprocess import TARGET_FRAMES
from .errors import ConfigError, DimensionError, EvaluationError, ParameterError, ProtocolError
from .evaluation import top_k_accuracy
from .models import ModelConfig
from .numerics import Rng, checked_mode, grad_check, log_softmax, softmax

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr_base: float = 1e-4
    lr_max: float = 3e-3
    cycle_epochs: int = 10
    weight_decay: float = 1e-5
    clip_norm: float = 1.0
    label_smoothing: float = 0.1
    dropout: float = 0.3
    patience: int = 10
    curriculum_epochs: tuple[int, ...] = (10, 25, 40)
    curriculum_lengths: tuple[int, ...] = (16, 32, 48, 64)
    seed: int = 42
    runs: int = 3

    def __post_init__(self):
        object.__setattr__(self, "curriculum_epochs", tuple(self.curriculum_epochs))
        object.__setattr__(self, "curriculum_lengths", tuple(self.curriculum_lengths))
        ce, cl = self.curriculum_epochs, self.curriculum_lengths
        if any(b <= a for a, b in zip(ce, ce[1:])):
            raise ConfigError("train.curriculum_epochs must be strictly increasing")
        if any(b <= a for a, b in zip(cl, cl[1:])) or not cl or cl[-1] != TARGET_FRAMES:
            raise ConfigError(f"train.curriculum_lengths must increase strictly and end at {TARGET_FRAMES}")
        if len(cl) != len(ce) + 1:
            raise ConfigError("train.curriculum_lengths needs one more entry than train.curriculum_epochs")
        if not 0 <= self.label_smoothing < 1:
            raise ConfigError("train.label_smoothing must lie in [0, 1)")
        if not self.lr_base < self.lr_max:
            raise ConfigError("train.lr_base must be below train.lr_max")
        for name in ("epochs", "batch_size", "cycle_epochs", "patience", "runs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"train.{name} must be positive")
        if not 0 <= self.dropout < 1:
            raise ConfigError("train.dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["curriculum_epochs"] = list(self.curriculum_epochs)
        d["curriculum_lengths"] = list(self.curriculum_lengths)
        return d


# ---------------------------------------------------------------- loss

def label_smoothed_loss(logits: np.ndarray, targets, epsilon: float = 0.1):
    """Mean cross-entropy against ``(1 - eps) * onehot + eps / K``; returns ``(loss, dlogits)``."""
    logits = np.asarray(logits)
    targets = np.asarray(targets)
    batch, k = logits.shape
    if k < 2:
        raise DimensionError("need at least two classes")
    if np.any(targets >= k) or np.any(targets < 0):
        raise ParameterError(f"target index outside [0, {k})")
    q = np.full(logits.shape, epsilon / k, dtype=logits.dtype)
    q[np.arange(batch), targets] += 1.0 - epsilon
    loss = -(q * log_softmax(logits)).sum() / batch
    grad = (softmax(logits) - q) / batch
    return float(loss), grad


def smoothed_target_entropy(k: int, epsilon: float) -> float:
    """Lower bound of :func:`label_smoothed_loss`: the entropy of the smoothed target."""
    hi = 1.0 - epsilon + epsilon / k
    lo = epsilon / k
    total = -hi * math.log(hi)
    if lo > 0:
        total -= (k - 1) * lo * math.log(lo)
    return total


# ---------------------------------------------------------------- optimiser

@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "OptimizerState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adamw_step(params: dict, grads: dict, state: OptimizerState, lr: float,
               weight_decay: float = 1e-5, beta1: float = 0.9, beta2: float = 0.999,
               eps: float = 1e-8):
    """Decoupled weight decay (``p -= lr * wd * p``) followed by a bias-corrected Adam update.

    Updates ``params`` and ``state`` in place and returns both.
    """
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, parameter {params[name].shape}")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for name, g in grads.items():
        p = params[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        if weight_decay:
            p -= lr * weight_decay * p
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


def global_norm(grads: dict) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))


def clip_global_norm(grads: dict, max_norm: float = 1.0) -> dict:
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: (g * scale).astype(g.dtype) for k, g in grads.items()}


# ---------------------------------------------------------------- schedules

def cyclical_cosine_lr(x: float, base: float = 1e-4, peak: float = 3e-3) -> float:
    """Cosine from ``peak`` at ``x = 0`` down to ``base`` at ``x = 1``."""
    return base + 0.5 * (peak - base) * (1.0 + math.cos(math.pi * x))


def scheduled_lr(epoch: int, step: int, steps_per_epoch: int, cfg: TrainConfig) -> float:
    """Per-step rate; each cycle of ``cycle_epochs`` restarts at the peak and its last step lands on the base."""
    pos = (epoch % cfg.cycle_epochs) * steps_per_epoch + step
    span = cfg.cycle_epochs * steps_per_epoch - 1
    x = pos / span if span > 0 else 0.0
    return cyclical_cosine_lr(x, cfg.lr_base, cfg.lr_max)


def curriculum_length(epoch: int, cfg: TrainConfig | None = None) -> int:
    cfg = cfg or TrainConfig()
    if epoch < 0:
        raise ParameterError("epoch must be non-negative")
    stage = sum(epoch >= e for e in cfg.curriculum_epochs)
    return cfg.curriculum_lengths[stage]


def curriculum_indices(length: int, total: int = TARGET_FRAMES) -> np.ndarray:
    """Uniform-stride frame indices: exact stride when it divides ``total``, else ``floor(k (total-1) / (length-1))``."""
    if not 1 <= length <= total:
        raise ParameterError(f"curriculum length {length} outside [1, {total}]")
    if total % length == 0:
        return np.arange(0, total, total // length)
    return np.array([k * (total - 1) // (length - 1) for k in range(length)])


# ---------------------------------------------------------------- early stopping

@dataclass
class EarlyStopState:
    patience: int = 10
    best_loss: float = math.inf
    best_epoch: int = -1
    since_improvement: int = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Record one epoch; returns True when it is a new best (strict improvement)."""
        if val_loss < self.best_loss:
            self.best_loss, self.best_epoch, self.since_improvement = val_loss, epoch, 0
            return True
        self.since_improvement += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.since_improvement >= self.patience


# ---------------------------------------------------------------- fit

LOG_FIELDS = ("epoch", "lr", "curriculum_frames", "train_loss", "val_loss", "val_top1", "val_top5")


@dataclass
class FitResult:
    params: dict
    best_epoch: int
    best_val_loss: float
    log: list[dict]


def _assert_signer_disjoint(*groups):
    seen = {}
    for name, seqs in groups:
        for s in seqs:
            other = seen.setdefault(s.signer, name)
            if other != name:
                raise ProtocolError(f"signer {s.signer!r} appears in both {other} and {name} sets")


def batch_metrics(params, mcfg: ModelConfig, x, y, epsilon, batch_size=256):
    logits = np.concatenate([models.predict(params, mcfg, x[i : i + batch_size])
                             for i in range(0, len(x), batch_size)])
    loss, _ = label_smoothed_loss(logits.astype(np.float64), y, epsilon)
    k5 = min(5, mcfg.num_classes)
    return loss, top_k_accuracy(logits, y, 1), top_k_accuracy(logits, y, k5)


def fit(mcfg: ModelConfig, train: list[LandmarkSequence], val: list[LandmarkSequence],
        cfg: TrainConfig, rng: Rng, checked: bool = False) -> FitResult:
    """Train from scratch and return the parameters from the epoch with the lowest validation loss."""
    _assert_signer_disjoint(("train", train), ("validation", val))
    if not train or not val:
        raise ProtocolError("fit needs non-empty training and validation sets")
    base = prepare_train(train)
    x_val, y_val = stack(prepare_eval(val))
    params = models.init_params(mcfg, rng.child("init"))
    state = OptimizerState.zeros_like(params)
    stopper = EarlyStopState(cfg.patience)
    best = {k: v.copy() for k, v in params.items()}
    n = len(base)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    rows = []
    with checked_mode(checked):
        for epoch in range(cfg.epochs):
            erng = rng.child(f"epoch{epoch}")
            frames = curriculum_length(epoch, cfg)
            idx = curriculum_indices(frames)
            order = erng.child("shuffle").permutation(n)
            augmented = [augment(base[i], erng.child(f"augment/{base[i].sample_id}")) for i in order]
            x_all, y_all = stack(augmented)
            x_all = np.ascontiguousarray(x_all[:, idx])
            total, lr0 = 0.0, None
            for step, start in enumerate(range(0, n, cfg.batch_size)):
                xb, yb = x_all[start : start + cfg.batch_size], y_all[start : start + cfg.batch_size]
                lr = scheduled_lr(epoch, step, steps_per_epoch, cfg)
                lr0 = lr if lr0 is None else lr0
                logits, cache = models.forward(params, mcfg, xb, True, erng.child(f"dropout/{step}"))
                loss, dlogits = label_smoothed_loss(logits, yb, cfg.label_smoothing)
                grads = clip_global_norm(models.backward(params, mcfg, cache, dlogits), cfg.clip_norm)
                adamw_step(params, grads, state, lr, cfg.weight_decay)
                for name, p in params.items():
                    if not np.all(np.isfinite(p)):
                        raise EvaluationError(f"parameter {name} became non-finite at epoch {epoch}")
                total += loss * len(xb)
            val_loss, top1, top5 = batch_metrics(params, mcfg, x_val, y_val, cfg.label_smoothing)
            row = {"epoch": epoch, "lr": lr0, "curriculum_frames": frames, "train_loss": total / n,
                   "val_loss": val_loss, "val_top1": top1, "val_top5": top5}
            rows.append(row)
            log.info("epoch %d lr %.2e frames %d train %.4f val %.4f top1 %.3f",
                     epoch, lr0, frames, row["train_loss"], val_loss, top1)
            if stopper.update(epoch, val_loss):
                best = {k: v.copy() for k, v in params.items()}
            if stopper.should_stop:
                break
    return FitResult(best, stopper.best_epoch, stopper.best_loss, rows)


def write_log(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_FIELDS)
        for r in rows:
            writer.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in LOG_FIELDS])


def read_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        out = []
        for r in csv.DictReader(fh):
            out.append({k: (int(v) if k in ("epoch", "curriculum_frames") else float(v)) for k, v in r.items()})
        return out


# ---------------------------------------------------------------- gradient verification

def param_gradient_errors(mcfg: ModelConfig, params: dict, x: np.ndarray, y: np.ndarray,
                          epsilon: float = 0.1, training: bool = True, seed: int = 0,
                          max_coords: int | None = None) -> dict[str, float]:
    """Finite-difference check of every parameter tensor through the smoothed loss (float64).

    With ``training`` on, dropout is active but every evaluation replays the
    same masks, so the objective stays a fixed differentiable function.
    """
    p64 = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
    x64 = np.asarray(x, dtype=np.float64)

    def loss_and_grads(current):
        rng = Rng(seed, "gradcheck") if training else None
        logits, cache = models.forward(current, mcfg, x64, training, rng)
        loss, dlogits = label_smoothed_loss(logits, y, epsilon)
        return loss, models.backward(current, mcfg, cache, dlogits)

    errors = {}
    pick = Rng(seed, "gradcheck/coords")
    for name in p64:
        def f(value, name=name):
            current = dict(p64)
            current[name] = value.reshape(p64[name].shape)
            loss, grads = loss_and_grads(current)
            return loss, grads[name]

        size = p64[name].size
        coords = None
        if max_coords is not None and size > max_coords:
            coords = sorted(pick.permutation(size)[:max_coords].tolist())
        errors[name] = grad_check(f, p64[name], indices=coords)
    return errors

