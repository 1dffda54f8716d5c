"""Banded dynamic time warping, class medoid selection and template alignment."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..errors import ParameterError
from .io import LandmarkSequence


@dataclass(frozen=True)
class WarpPath:
    pairs: tuple[tuple[int, int], ...]

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


def frame_costs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance between every frame of ``a`` and every frame of ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def effective_width(n: int, m: int, width: int) -> int:
    return max(int(width), abs(n - m))


def in_band(i: int, j: int, n: int, m: int, w: int) -> bool:
    """Slope-adjusted band test, measured along the longer sequence's axis.

    For ``n >= m`` this is ``|i - j (n-1)/(m-1)| <= w`` in exact integer form;
    the roles swap when ``m > n`` so that the band (and the distance) is
    symmetric in its two arguments.
    """
    return abs(i * (m - 1) - j * (n - 1)) <= w * min(n - 1, m - 1)


@numba.njit(cache=True)
def _accumulate(cost, w):
    n, m = cost.shape
    span = min(n - 1, m - 1)
    acc = np.full((n, m), np.inf)
    for i in range(n):
        for j in range(m):
            if abs(i * (m - 1) - j * (n - 1)) > w * span:
                continue
            if i == 0 and j == 0:
                acc[i, j] = cost[i, j]
                continue
            best = np.inf
            if i > 0 and j > 0:
                best = acc[i - 1, j - 1]
            if i > 0 and acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if j > 0 and acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = cost[i, j] + best
    return acc


def _backtrack(acc):
    i, j = acc.shape[0] - 1, acc.shape[1] - 1
    pairs = [(i, j)]
    while i > 0 or j > 0:
        # candidate order fixes tie-breaking: diagonal, then vertical, then horizontal
        candidates = []
        if i > 0 and j > 0:
            candidates.append((acc[i - 1, j - 1], i - 1, j - 1))
        if i > 0:
            candidates.append((acc[i - 1, j], i - 1, j))
        if j > 0:
            candidates.append((acc[i, j - 1], i, j - 1))
        best = min(c[0] for c in candidates)
        _, i, j = next(c for c in candidates if c[0] == best)
        pairs.append((i, j))
    return WarpPath(tuple(reversed(pairs)))


def dtw_from_costs(cost: np.ndarray, width: int) -> tuple[float, WarpPath]:
    n, m = cost.shape
    acc = _accumulate(np.ascontiguousarray(cost, dtype=np.float64), effective_width(n, m, width))
    return float(acc[-1, -1]), _backtrack(acc)


def dtw_banded(a, b, width: int = 10) -> tuple[float, WarpPath]:
    """Minimum cumulative Euclidean cost over monotone in-band warping paths.

    The band half-width is widened to ``max(width, |n - m|)`` so a path
    always exists.
    """
    if width < 0:
        raise ParameterError(f"band width must be non-negative, got {width}")
    return dtw_from_costs(frame_costs(a, b), width)


def class_medoid(samples: list[LandmarkSequence], width: int = 10) -> LandmarkSequence:
    """Member with the smallest summed DTW distance to the others; ties go to the lowest id."""
    if not samples:
        raise ParameterError("class_medoid needs at least one sample")
    n = len(samples)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dist[i, j] = dist[j, i] = dtw_banded(samples[i].frames, samples[j].frames, width)[0]
    totals = dist.sum(axis=1)
    best = min(range(n), key=lambda k: (totals[k], samples[k].sample_id))
    return samples[best]


def align_to_template(seq: LandmarkSequence, template: LandmarkSequence, width: int = 10) -> LandmarkSequence:
    """Re-time ``seq`` onto the template's frame count by averaging frames the warp maps together."""
    _, path = dtw_banded(seq.frames, template.frames, width)
    src = np.asarray(seq.frames, dtype=np.float64)
    out = np.zeros((template.num_frames, src.shape[1]))
    counts = np.zeros(template.num_frames)
    for i, j in path:
        out[j] += src[i]
        counts[j] += 1
    return seq.with_frames(out / counts[:, None])
