"""Checkpoint container: config, shape manifest and float32 parameter payload with a SHA-256."""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ConfigError, FormatError
from .config import ModelConfig, param_shapes

MAGIC = b"SLRC"
VERSION = 1
_PREFIX = struct.Struct("<4sII")


def save_checkpoint(path, cfg: ModelConfig, params: dict, meta: dict | None = None) -> None:
    shapes = param_shapes(cfg)
    chunks, manifest, offset = [], [], 0
    for name, shape in shapes.items():
        arr = np.asarray(params[name])
        if arr.shape != shape:
            raise FormatError(f"parameter {name} has shape {arr.shape}, config implies {shape}")
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        manifest.append([name, list(shape), offset, len(blob)])
        chunks.append(blob)
        offset += len(blob)
    payload = b"".join(chunks)
    header = json.dumps({
        "config": cfg.to_dict(),
        "manifest": manifest,
        "meta": meta or {},
        "sha256": hashlib.sha256(payload).hexdigest(),
    }, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        fh.write(header)
        fh.write(payload)


def load_checkpoint(path) -> tuple[ModelConfig, dict, dict]:
    """Return ``(config, params, meta)``; the checksum is verified before anything is decoded."""
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise FormatError(f"{path}: not a checkpoint")
    magic, version, header_len = _PREFIX.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise FormatError(f"{path}: bad checkpoint magic/version")
    body = _PREFIX.size + header_len
    try:
        header = json.loads(data[_PREFIX.size:body])
    except ValueError as exc:
        raise FormatError(f"{path}: unreadable checkpoint header") from exc
    payload = data[body:]
    if hashlib.sha256(payload).hexdigest() != header.get("sha256"):
        raise FormatError(f"{path}: checksum mismatch, refusing to load")
    try:
        cfg = ModelConfig(**header["config"])
    except (TypeError, ConfigError) as exc:
        raise FormatError(f"{path}: invalid model config ({exc})") from exc
    expected = param_shapes(cfg)
    stored = {name: (tuple(shape), offset, nbytes) for name, shape, offset, nbytes in header["manifest"]}
    if {k: v[0] for k, v in stored.items()} != expected:
        raise FormatError(f"{path}: shape manifest does not match the stored config")
    params = {}
    for name, (shape, offset, nbytes) in stored.items():
        if offset + nbytes > len(payload):
            raise FormatError(f"{path}: payload truncated at {name}")
        params[name] = np.frombuffer(payload, dtype="<f4", count=nbytes // 4, offset=offset).reshape(shape).astype(np.float32)
    return cfg, params, header.get("meta", {})
