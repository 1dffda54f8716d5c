"""Spatial normalisation and spline resampling of landmark sequences."""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline

from ..errors import ParameterError
from .io import NUM_LANDMARKS, LandmarkSequence

ZSCORE_EPS = 1e-8
TARGET_FRAMES = 64


def landmarks(frames: np.ndarray) -> np.ndarray:
    """View ``[T, 63]`` frames as ``[T, 21, 3]``."""
    return frames.reshape(frames.shape[0], NUM_LANDMARKS, 3)


def wrist_center(seq: LandmarkSequence) -> LandmarkSequence:
    pts = landmarks(np.asarray(seq.frames, dtype=np.float64))
    centered = pts - pts[:, :1, :]
    return seq.with_frames(centered.reshape(seq.num_frames, -1))


def zscore(seq: LandmarkSequence) -> LandmarkSequence:
    """Per-feature standardisation over this sample's frames."""
    x = np.asarray(seq.frames, dtype=np.float64)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    return seq.with_frames((x - mean) / (std + ZSCORE_EPS))


def fit_spline(frames: np.ndarray) -> CubicSpline:
    """Natural cubic spline per feature over normalised time ``k / (T - 1)``."""
    t = np.linspace(0.0, 1.0, frames.shape[0])
    return CubicSpline(t, np.asarray(frames, dtype=np.float64), axis=0, bc_type="natural")


def resample_cubic(seq: LandmarkSequence, target: int = TARGET_FRAMES) -> LandmarkSequence:
    if target < 2:
        raise ParameterError(f"target must be at least 2 frames, got {target}")
    spline = fit_spline(seq.frames)
    out = spline(np.linspace(0.0, 1.0, target))
    return seq.with_frames(out)


def standardize(seq: LandmarkSequence, target: int = TARGET_FRAMES) -> LandmarkSequence:
    """Inference-time pipeline: wrist centring, z-score, resampling."""
    return resample_cubic(zscore(wrist_center(seq)), target)
