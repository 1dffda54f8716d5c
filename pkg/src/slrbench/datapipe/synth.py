"""Synthetic hand-landmark signs with per-class motion and per-signer deformation."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ParameterError
from ..numerics import Rng
from .io import NUM_LANDMARKS, DatasetManifest, SampleEntry

MIN_FRAMES, MAX_FRAMES = 40, 90

# MediaPipe hand ordering: wrist, then four joints per finger (thumb..pinky)
_FINGER_ANGLES = np.radians([-55.0, -20.0, 0.0, 18.0, 36.0])
_JOINT_RADII = np.array([0.035, 0.065, 0.085, 0.1])


def _base_hand() -> np.ndarray:
    pts = np.zeros((NUM_LANDMARKS, 3))
    for f, ang in enumerate(_FINGER_ANGLES):
        for k, r in enumerate(_JOINT_RADII):
            pts[1 + 4 * f + k] = (r * math.sin(ang), -r * math.cos(ang), 0.0)
    return pts


def _rot_z(theta):
    c, s = np.cos(theta), np.sin(theta)
    return c, s


def _class_params(classes: int, rng: Rng) -> list[dict]:
    # stratified frequencies keep classes pairwise distinct for any class count
    rot_order = rng.child("rot_order").permutation(classes)
    curl_order = rng.child("curl_order").permutation(classes)
    params = []
    for c in range(classes):
        r = rng.child(f"class{c}")
        params.append({
            "rot_freq": 0.5 + 2.5 * (rot_order[c] + r.uniform(0.25, 0.75)) / classes,
            "rot_amp": r.uniform(0.3, 0.8),
            "rot_phase": r.uniform(0, 2 * math.pi),
            "curl_freq": 0.5 + 2.5 * (curl_order[c] + r.uniform(0.25, 0.75)) / classes,
            "curl_amp": r.uniform(0.2, 0.9, size=5),
            "curl_phase": r.uniform(0, 2 * math.pi, size=5),
            "tilt_freq": r.uniform(0.5, 2.0),
            "tilt_amp": r.uniform(0.1, 0.5),
            "tilt_phase": r.uniform(0, 2 * math.pi),
            "path": r.uniform(-0.15, 0.15, size=(2, 2)),
        })
    return params


def _signer_params(signers: int, rng: Rng) -> list[dict]:
    out = []
    for s in range(signers):
        r = rng.child(f"signer{s}")
        out.append({
            "scale": r.uniform(0.85, 1.15),
            "offset": np.array([r.uniform(0.35, 0.65), r.uniform(0.4, 0.7), r.uniform(-0.05, 0.05)]),
            "speed": math.exp(r.uniform(math.log(0.8), math.log(1.25))),
            "shape": r.normal(0.0, 0.004, size=(NUM_LANDMARKS, 3)),
        })
    return out


def render_sign(cls: dict, signer: dict, num_frames: int, rng: Rng, noise: float = 0.002) -> np.ndarray:
    """Landmark frames ``[num_frames, 63]`` for one performance of a class by a signer."""
    u = np.linspace(0.0, 1.0, num_frames)
    tau = u ** signer["speed"] + rng.uniform(-0.02, 0.02)
    base = _base_hand() + signer["shape"]
    base[0] = 0.0

    two_pi_tau = 2 * math.pi * tau
    curl = cls["curl_amp"][None, :] * np.sin(cls["curl_freq"] * two_pi_tau[:, None] + cls["curl_phase"][None, :])
    pts = np.repeat(base[None], num_frames, axis=0)
    for f in range(5):
        for k in range(4):
            idx = 1 + 4 * f + k
            frac = (k + 1) / 4
            pts[:, idx, :2] *= (1.0 - 0.45 * frac * curl[:, f])[:, None]
            pts[:, idx, 2] = base[idx, 2] - 0.03 * frac * curl[:, f]

    alpha = cls["rot_amp"] * np.sin(cls["rot_freq"] * two_pi_tau + cls["rot_phase"])
    c, s = _rot_z(alpha)
    x, y = pts[..., 0].copy(), pts[..., 1].copy()
    pts[..., 0] = c[:, None] * x - s[:, None] * y
    pts[..., 1] = s[:, None] * x + c[:, None] * y

    beta = cls["tilt_amp"] * np.sin(cls["tilt_freq"] * two_pi_tau + cls["tilt_phase"])
    cb, sb = np.cos(beta), np.sin(beta)
    y, z = pts[..., 1].copy(), pts[..., 2].copy()
    pts[..., 1] = cb[:, None] * y - sb[:, None] * z
    pts[..., 2] = sb[:, None] * y + cb[:, None] * z

    wrist = signer["offset"][None, :].repeat(num_frames, axis=0)
    wrist[:, :2] += np.sin(two_pi_tau)[:, None] * cls["path"][0] + tau[:, None] * cls["path"][1]
    pts = signer["scale"] * pts + wrist[:, None, :]
    pts += rng.normal(0.0, noise, pts.shape)
    return pts.reshape(num_frames, -1)


def synth_generate(classes: int, signers: int, samples_per_class: int, rng: Rng,
                   name: str = "synthetic") -> DatasetManifest:
    """Balanced synthetic dataset held in the manifest's in-memory cache.

    Sample ``k`` of every class is performed by signer ``k mod signers``.
    """
    if min(classes, signers, samples_per_class) < 1:
        raise ParameterError("classes, signers and samples_per_class must all be at least 1")
    class_params = _class_params(classes, rng.child("classes"))
    signer_params = _signer_params(signers, rng.child("signers"))
    entries, cache = [], {}
    for c in range(classes):
        for k in range(samples_per_class):
            s = k % signers
            sid = f"c{c:03d}_s{s:03d}_{k:03d}"
            r = rng.child(f"sample/{sid}")
            t = int(r.integers(MIN_FRAMES, MAX_FRAMES + 1))
            frames = render_sign(class_params[c], signer_params[s], t, r).astype(np.float32)
            cache[sid] = frames
            entries.append(SampleEntry(sid, c, f"signer{s:03d}", f"samples/{sid}.slrb", t))
    return DatasetManifest(classes, entries, name=name, cache=cache)
