"""Training-time augmentations.  Each draws its randomness from the given stream."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ParameterError
from ..numerics import Rng
from .io import LandmarkSequence
from .preprocess import fit_spline, landmarks

JITTER = 0.05
MAX_ROTATION_DEG = 15.0
NOISE_SIGMA = 0.01


def augment_temporal_jitter(seq: LandmarkSequence, rng: Rng | None = None,
                            scale: float | None = None) -> LandmarkSequence:
    """Rescale the time axis by ``s ~ U[0.95, 1.05]`` and resample to the same length.

    Output frame ``k`` is the sequence's natural spline at ``s * k / (T - 1)``.
    Past the last knot the spline is continued linearly with its end slope
    (the natural boundary has zero curvature there, so this is C2).
    """
    if scale is None:
        scale = rng.uniform(1 - JITTER, 1 + JITTER)
    t_count = seq.num_frames
    spline = fit_spline(seq.frames)
    t = scale * np.linspace(0.0, 1.0, t_count)
    inside = np.minimum(t, 1.0)
    out = spline(inside)
    over = t > 1.0
    if over.any():
        slope = spline(1.0, 1)
        out[over] += (t[over] - 1.0)[:, None] * slope
    return seq.with_frames(out)


def augment_rotate(seq: LandmarkSequence, rng: Rng | None = None,
                   degrees: float | None = None) -> LandmarkSequence:
    """Rotate every landmark's (x, y) about the origin by one angle for the whole sample."""
    if degrees is None:
        degrees = rng.uniform(-MAX_ROTATION_DEG, MAX_ROTATION_DEG)
    theta = math.radians(degrees)
    c, s = math.cos(theta), math.sin(theta)
    pts = landmarks(np.array(seq.frames, dtype=np.float64))
    x, y = pts[..., 0].copy(), pts[..., 1].copy()
    pts[..., 0] = c * x - s * y
    pts[..., 1] = s * x + c * y
    return seq.with_frames(pts.reshape(seq.num_frames, -1))


def augment_noise(seq: LandmarkSequence, rng: Rng, sigma: float = NOISE_SIGMA) -> LandmarkSequence:
    if sigma < 0:
        raise ParameterError(f"noise sigma must be non-negative, got {sigma}")
    frames = np.asarray(seq.frames, dtype=np.float64)
    if sigma == 0:
        return seq.with_frames(frames.copy())
    return seq.with_frames(frames + rng.normal(0.0, sigma, frames.shape))


def augment(seq: LandmarkSequence, rng: Rng) -> LandmarkSequence:
    """Jitter, then rotate, then add noise, each on its own child stream."""
    seq = augment_temporal_jitter(seq, rng.child("jitter"))
    seq = augment_rotate(seq, rng.child("rotate"))
    return augment_noise(seq, rng.child("noise"))
