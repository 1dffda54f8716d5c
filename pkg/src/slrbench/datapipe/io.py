"""Landmark sequence records, the SLRB binary sample format and the JSON manifest."""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError, FormatError, ParameterError

FEAT_DIM = 63
NUM_LANDMARKS = 21
MAGIC = b"SLRB"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class LandmarkSequence:
    """One sample: ``frames`` is ``[T, 63]`` (21 landmarks x (x, y, z)) plus metadata."""

    frames: np.ndarray
    label: int = -1
    signer: str = ""
    sample_id: str = ""

    def __post_init__(self):
        f = self.frames
        if f.ndim != 2 or f.shape[1] != FEAT_DIM:
            raise DataError(f"{self.sample_id or 'sequence'}: frames must be [T, {FEAT_DIM}], got {f.shape}")
        if f.shape[0] < 2:
            raise DataError(f"{self.sample_id or 'sequence'}: need at least 2 frames, got {f.shape[0]}")
        if not np.all(np.isfinite(f)):
            raise DataError(f"{self.sample_id or 'sequence'}: non-finite landmark value")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    def with_frames(self, frames: np.ndarray) -> "LandmarkSequence":
        return dataclasses.replace(self, frames=frames)


def write_slrb(path, frames: np.ndarray) -> None:
    frames = np.asarray(frames)
    if frames.ndim != 2:
        raise FormatError(f"expected a 2-D frame array, got shape {frames.shape}")
    payload = np.ascontiguousarray(frames, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, frames.shape[0], frames.shape[1]))
        fh.write(payload)


def read_slrb(path) -> np.ndarray:
    """Decode an SLRB file into a float32 ``[num_frames, 63]`` array (fail-closed)."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: file shorter than the SLRB header")
    magic, version, num_frames, feat_dim = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if feat_dim != FEAT_DIM:
        raise FormatError(f"{path}: feat_dim {feat_dim}, expected {FEAT_DIM}")
    expected = _HEADER.size + 4 * num_frames * feat_dim
    if len(data) != expected:
        raise FormatError(f"{path}: payload is {len(data) - _HEADER.size} bytes, header implies {expected - _HEADER.size}")
    frames = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(num_frames, feat_dim)
    if not np.all(np.isfinite(frames)):
        raise DataError(f"{path}: non-finite landmark value")
    return frames.astype(np.float32)


def save_sequence(path, seq: LandmarkSequence) -> None:
    write_slrb(path, seq.frames)


def load_sequence(path, entry: "SampleEntry | None" = None) -> LandmarkSequence:
    frames = read_slrb(path)
    if entry is None:
        return LandmarkSequence(frames, sample_id=Path(path).stem)
    if frames.shape[0] != entry.frames:
        raise FormatError(f"{path}: {frames.shape[0]} frames, manifest says {entry.frames}")
    return LandmarkSequence(frames, entry.label, entry.signer, entry.id)


@dataclass(frozen=True)
class SampleEntry:
    id: str
    label: int
    signer: str
    file: str
    frames: int


@dataclass
class DatasetManifest:
    """Sample inventory.  ``root`` resolves relative file paths; ``cache`` holds in-memory frames."""

    classes: int
    samples: list[SampleEntry]
    root: Path = Path(".")
    name: str = "dataset"
    cache: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.classes < 1:
            raise FormatError("manifest needs a positive class count")
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise FormatError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)
            if not 0 <= s.label < self.classes:
                raise FormatError(f"sample {s.id!r}: label {s.label} outside [0, {self.classes})")

    @property
    def signers(self) -> list[str]:
        return sorted({s.signer for s in self.samples})

    def by_id(self) -> dict[str, SampleEntry]:
        return {s.id: s for s in self.samples}

    def sequence(self, entry: SampleEntry) -> LandmarkSequence:
        if entry.id in self.cache:
            return LandmarkSequence(self.cache[entry.id], entry.label, entry.signer, entry.id)
        return load_sequence(self.root / entry.file, entry)

    def sequences(self, ids=None) -> list[LandmarkSequence]:
        index = self.by_id()
        entries = self.samples if ids is None else [index[i] for i in ids]
        return [self.sequence(e) for e in entries]

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "classes": self.classes,
            "samples": [dataclasses.asdict(s) for s in self.samples],
        }

    def save(self, root) -> Path:
        """Write every cached sequence as SLRB plus ``manifest.json`` under ``root``."""
        root = Path(root)
        for s in self.samples:
            if s.id in self.cache:
                target = root / s.file
                target.parent.mkdir(parents=True, exist_ok=True)
                write_slrb(target, self.cache[s.id])
        path = root / "manifest.json"
        path.write_text(json.dumps(self.to_json(), indent=1) + "\n")
        self.root = root
        return path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        if not path.exists():
            raise DataError(f"dataset manifest not found: {path}")
        try:
            doc = json.loads(path.read_text())
            samples = [
                SampleEntry(str(s["id"]), int(s["label"]), str(s["signer"]), str(s["file"]), int(s["frames"]))
                for s in doc["samples"]
            ]
            classes = int(doc["classes"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: malformed manifest ({exc})") from exc
        return cls(classes, samples, root=path.parent, name=doc.get("name", path.parent.name))


def subset(manifest: DatasetManifest, ids) -> list[SampleEntry]:
    index = manifest.by_id()
    try:
        return [index[i] for i in ids]
    except KeyError as exc:
        raise ParameterError(f"unknown sample id {exc}") from exc
