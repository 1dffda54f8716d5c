"""Fixed-order preprocessing: wrist centring, z-score, (train) medoid alignment, resampling."""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from .dtw import align_to_template, class_medoid
from .io import LandmarkSequence
from .preprocess import TARGET_FRAMES, resample_cubic, standardize, wrist_center, zscore

DTW_WIDTH = 10


def prepare_eval(seqs: list[LandmarkSequence], target: int = TARGET_FRAMES) -> list[LandmarkSequence]:
    return [standardize(s, target) for s in seqs]


def prepare_train(seqs: list[LandmarkSequence], width: int = DTW_WIDTH,
                  target: int = TARGET_FRAMES) -> list[LandmarkSequence]:
    """Normalise, align each sample to its class medoid, then resample to ``target`` frames."""
    normed = [zscore(wrist_center(s)) for s in seqs]
    groups = defaultdict(list)
    for s in normed:
        groups[s.label].append(s)
    medoids = {label: class_medoid(members, width) for label, members in groups.items()}
    return [resample_cubic(align_to_template(s, medoids[s.label], width), target) for s in normed]


def stack(seqs: list[LandmarkSequence], dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    """Batch ``[N, T, 63]`` inputs and ``[N]`` labels."""
    x = np.stack([s.frames for s in seqs]).astype(dtype)
    y = np.array([s.label for s in seqs], dtype=np.int64)
    return x, y
