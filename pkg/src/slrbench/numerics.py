"""Dense tensor helpers, seeded random streams and a finite-difference gradient checker.

Tensors are plain ``numpy.ndarray`` values.  Every operation here is a pure
function of its inputs; layers that need a backward pass expose a matching
``*_backward`` function taking the forward inputs and the upstream gradient.
"""

from __future__ import annotations

import contextlib
import hashlib
import math
from typing import Callable, Iterable, Iterator

import numpy as np

from .errors import DimensionError, EvaluationError, ParameterError

_CHECKED = False


@contextlib.contextmanager
def checked_mode(enabled: bool = True) -> Iterator[None]:
    """Reject non-finite values after every guarded operation while active."""
    global _CHECKED
    previous = _CHECKED
    _CHECKED = enabled
    try:
        yield
    finally:
        _CHECKED = previous


def is_checked() -> bool:
    return _CHECKED


def guard(arr: np.ndarray, name: str = "tensor") -> np.ndarray:
    if _CHECKED and not np.all(np.isfinite(arr)):
        raise EvaluationError(f"non-finite values in {name}")
    return arr


def as_tensor(values, dtype=np.float64, shape: Iterable[int] | None = None) -> np.ndarray:
    """Build a tensor, validating element count against ``shape`` and finiteness."""
    arr = np.asarray(values, dtype=dtype)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise DimensionError(f"extents must be positive, got {shape}")
        if arr.size != math.prod(shape):
            raise DimensionError(f"{arr.size} values cannot fill shape {shape}")
        arr = arr.reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise EvaluationError("tensor contains NaN or Inf")
    return arr


class Rng:
    """Seeded random stream identified by ``(seed, stream)``.

    The stream label is hashed into the seed sequence's spawn key, so two
    streams with different labels are statistically independent while the
    same pair always reproduces the same draws (PCG64 is platform independent).
    """

    def __init__(self, seed: int, stream: str = "root"):
        if not 0 <= int(seed) < 2**64:
            raise ParameterError("seed must be an unsigned 64-bit integer")
        self.seed = int(seed)
        self.stream = stream
        digest = hashlib.sha256(stream.encode("utf-8")).digest()
        key = tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 32, 4))
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=key)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def child(self, label) -> "Rng":
        return Rng(self.seed, f"{self.stream}/{label}")

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream!r})"

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def random(self, size=None):
        return self._gen.random(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n):
        return self._gen.permutation(n)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return guard(a @ b, "matmul")


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def conv2d_same(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """3x3 cross-correlation with one cell of zero padding.

    ``x`` is ``[..., H, W, Cin]``; leading axes are treated as a batch.
    """
    if kernels.ndim != 4 or kernels.shape[:2] != (3, 3):
        raise DimensionError(f"expected 3x3xCinxCout kernels, got {kernels.shape}")
    if x.ndim < 3 or x.shape[-1] != kernels.shape[2]:
        raise DimensionError(f"input channels {x.shape[-1:]} do not match kernels {kernels.shape}")
    if bias.shape != (kernels.shape[3],):
        raise DimensionError(f"bias shape {bias.shape} does not match {kernels.shape[3]} filters")
    h, w = x.shape[-3], x.shape[-2]
    pad = _pad_hw(x)
    out = np.broadcast_to(bias, x.shape[:-1] + (kernels.shape[3],)).copy()
    for dy in range(3):
        for dx in range(3):
            out += pad[..., dy : dy + h, dx : dx + w, :] @ kernels[dy, dx]
    return guard(out, "conv2d_same")


def conv2d_same_backward(x, kernels, dout):
    """Return ``(dx, dkernels, dbias)`` for :func:`conv2d_same`."""
    h, w, cin = x.shape[-3:]
    cout = kernels.shape[3]
    pad = _pad_hw(x)
    dpad = np.zeros_like(pad)
    dk = np.zeros_like(kernels)
    flat_out = dout.reshape(-1, cout)
    for dy in range(3):
        for dx in range(3):
            patch = pad[..., dy : dy + h, dx : dx + w, :]
            dk[dy, dx] = patch.reshape(-1, cin).T @ flat_out
            dpad[..., dy : dy + h, dx : dx + w, :] += dout @ kernels[dy, dx].T
    return dpad[..., 1:-1, 1:-1, :], dk, flat_out.sum(axis=0)


def _pad_hw(x):
    widths = [(0, 0)] * (x.ndim - 3) + [(1, 1), (1, 1), (0, 0)]
    return np.pad(x, widths)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    if logits.shape[axis] < 1:
        raise DimensionError("softmax of an empty vector")
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return guard(e / e.sum(axis=axis, keepdims=True), "softmax")


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def layer_norm(x, gain, shift, epsilon: float = 1e-5):
    """Normalise over the last axis, then scale by ``gain`` and offset by ``shift``."""
    if epsilon <= 0:
        raise ParameterError("epsilon must be positive")
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    xhat = (x - mu) / np.sqrt(var + epsilon)
    return guard(xhat * gain + shift, "layer_norm")


def layer_norm_backward(x, gain, dout, epsilon: float = 1e-5):
    """Return ``(dx, dgain, dshift)`` for :func:`layer_norm`."""
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + epsilon)
    xhat = (x - mu) * inv
    d = x.shape[-1]
    lead = tuple(range(x.ndim - 1))
    dgain = (dout * xhat).sum(axis=lead)
    dshift = dout.sum(axis=lead)
    dxhat = dout * gain
    dx = inv * (dxhat - dxhat.sum(axis=-1, keepdims=True) / d
                - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True) / d)
    return dx, dgain, dshift


def dropout_mask(shape, p: float, rng: Rng, dtype=np.float32) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability ``p``, survivors ``1/(1-p)``."""
    if not 0 <= p < 1:
        raise ParameterError(f"dropout probability must lie in [0, 1), got {p}")
    if p == 0:
        return np.ones(shape, dtype=dtype)
    keep = rng.random(shape) >= p
    return (keep / (1.0 - p)).astype(dtype)


def dropout(x: np.ndarray, p: float, rng: Rng | None, training: bool) -> np.ndarray:
    if not 0 <= p < 1:
        raise ParameterError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0:
        return x
    return x * dropout_mask(x.shape, p, rng, x.dtype)


def grad_check(f: Callable[[np.ndarray], tuple[float, np.ndarray]], x: np.ndarray,
               h: float = 1e-5, indices: Iterable[int] | None = None) -> float:
    """Max relative error between ``f``'s analytic gradient and central differences.

    ``f`` maps a float64 array to ``(value, gradient)``.  The error per
    coordinate is ``|g_analytic - g_fd| / max(1, |g_fd|)``.  ``indices``
    restricts the comparison to a subset of flat coordinates.
    """
    x = np.array(x, dtype=np.float64)
    value, grad = f(x.copy())
    if not np.isfinite(value):
        raise EvaluationError("objective is not finite at the check point")
    grad = np.asarray(grad, dtype=np.float64).reshape(-1)
    flat = x.reshape(-1)
    coords = range(flat.size) if indices is None else indices
    worst = 0.0
    for i in coords:
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x.copy())[0]
        flat[i] = orig - h
        fm = f(x.copy())[0]
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise EvaluationError(f"objective is not finite near coordinate {i}")
        fd = (fp - fm) / (2 * h)
        worst = max(worst, abs(grad[i] - fd) / max(1.0, abs(fd)))
    return worst
