"""Experiment configuration files and the (model, fold, seed) cell runner.

Config files are INI documents with ``[data]``, ``[model]``, ``[train]`` and
``[run]`` sections.  Every key has a default; unknown sections or keys are
rejected so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from .datapipe.io import DatasetManifest
from .errors import ConfigError, SLRError
from .evaluation import CellResult, FoldPlan, aggregate, evaluate, signer_independent_folds
from .models import KINDS, ModelConfig, save_checkpoint
from .numerics import Rng
from .training import TrainConfig, fit, write_log

log = logging.getLogger(__name__)

# dropout has a single source of truth in [train]
_MODEL_KEYS = [f.name for f in dataclasses.fields(ModelConfig) if f.name != "dropout"]
_TRAIN_KEYS = [f.name for f in dataclasses.fields(TrainConfig)]


@dataclass(frozen=True)
class ExperimentConfig:
    data_root: str = "data"
    folds: int = 5
    output_dir: str = "runs"
    checked: bool = False
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    num_classes_set: bool = False

    @property
    def seeds(self) -> list[int]:
        return [self.train.seed + r for r in range(self.train.runs)]

    def with_kind(self, kind: str) -> "ExperimentConfig":
        if kind not in KINDS:
            raise ConfigError(f"--model must be one of {KINDS}, got {kind!r}")
        return dataclasses.replace(self, model=dataclasses.replace(self.model, kind=kind))

    def for_manifest(self, manifest: DatasetManifest) -> "ExperimentConfig":
        if self.num_classes_set and self.model.num_classes != manifest.classes:
            raise ConfigError(f"model.num_classes = {self.model.num_classes} but the manifest has {manifest.classes} classes")
        return dataclasses.replace(self, model=dataclasses.replace(self.model, num_classes=manifest.classes),
                                   num_classes_set=True)


def _convert(section: str, key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            return configparser.ConfigParser.BOOLEAN_STATES[raw.strip().lower()]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.replace(",", " ").split())
        return raw.strip()
    except (KeyError, ValueError):
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} as {type(default).__name__}") from None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    allowed = {
        "data": {"root": "data", "folds": 5},
        "run": {"output_dir": "runs", "checked": False},
        "model": {k: getattr(ModelConfig(), k) for k in _MODEL_KEYS},
        "train": {k: getattr(TrainConfig(), k) for k in _TRAIN_KEYS},
    }
    values: dict[str, dict] = {s: {} for s in allowed}
    for section in parser.sections():
        if section not in allowed:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in allowed[section]:
                raise ConfigError(f"{source}: unknown key {section}.{key}")
            values[section][key] = _convert(section, key, raw, allowed[section][key])
    train = TrainConfig(**values["train"])
    model = ModelConfig(**values["model"], dropout=train.dropout)
    folds = values["data"].get("folds", 5)
    if folds < 2:
        raise ConfigError("data.folds must be at least 2")
    return ExperimentConfig(
        data_root=values["data"].get("root", "data"),
        folds=folds,
        output_dir=values["run"].get("output_dir", "runs"),
        checked=values["run"].get("checked", False),
        model=model,
        train=train,
        num_classes_set="num_classes" in values["model"],
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    """Resolved config in the same INI format (round-trips through :func:`parse_config`)."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str

    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (tuple, list)):
            return ", ".join(str(x) for x in v)
        return repr(v) if isinstance(v, float) else str(v)

    parser["data"] = {"root": cfg.data_root, "folds": fmt(cfg.folds)}
    # an unresolved class count stays unset so the dump still fits any manifest
    parser["model"] = {k: fmt(getattr(cfg.model, k)) for k in _MODEL_KEYS
                       if k != "num_classes" or cfg.num_classes_set}
    parser["train"] = {k: fmt(getattr(cfg.train, k)) for k in _TRAIN_KEYS}
    parser["run"] = {"output_dir": cfg.output_dir, "checked": fmt(cfg.checked)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


# ---------------------------------------------------------------- cells

def load_manifest(cfg: ExperimentConfig) -> DatasetManifest:
    return DatasetManifest.load(Path(cfg.data_root) / "manifest.json")


def fold_plan(cfg: ExperimentConfig, manifest: DatasetManifest) -> FoldPlan:
    return signer_independent_folds(manifest, cfg.folds, Rng(cfg.train.seed, "folds"))


def cell_dir(cfg: ExperimentConfig, kind: str, fold: int, seed: int) -> Path:
    return Path(cfg.output_dir) / kind / str(fold) / str(seed)


def read_cell(path: Path) -> CellResult | None:
    """Completed cell result, or None when absent or unreadable (to be recomputed)."""
    try:
        doc = json.loads((path / "result.json").read_text())
        return CellResult(doc["model"], doc["dataset"], int(doc["fold"]), int(doc["seed"]),
                          float(doc["top1"]), float(doc["top5"]))
    except (OSError, ValueError, KeyError):
        return None


def _atomic_write(path: Path, text: str) -> None:
    # concurrent cells may write the same file
    tmp = path.with_name(f"{path.name}.{os.getpid()}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def run_cell(cfg: ExperimentConfig, kind: str, fold: int, seed: int,
             manifest: DatasetManifest | None = None) -> CellResult:
    """Train one model on one fold with one run seed, evaluate on the fold's test signers, write artifacts."""
    manifest = manifest or load_manifest(cfg)
    cfg = cfg.with_kind(kind).for_manifest(manifest)
    plan = fold_plan(cfg, manifest)
    if not 0 <= fold < len(plan.folds):
        raise ConfigError(f"--fold must lie in [0, {len(plan.folds)}), got {fold}")
    split = plan.folds[fold]
    out = cell_dir(cfg, kind, fold, seed)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(Path(cfg.output_dir) / "fold_plan.json", json.dumps(plan.to_json(), indent=1, sort_keys=True) + "\n")
    (out / "config.ini").write_text(dump_config(cfg))

    result = fit(cfg.model, manifest.sequences(split.train), manifest.sequences(split.val),
                 cfg.train, Rng(seed, f"fold{fold}"), checked=cfg.checked)
    top1, top5 = evaluate(cfg.model, result.params, manifest.sequences(split.test))
    meta = {"model": kind, "dataset": manifest.name, "fold": fold, "seed": seed,
            "best_epoch": result.best_epoch, "best_val_loss": result.best_val_loss}
    save_checkpoint(out / "checkpoint.slrc", cfg.model, result.params, meta)
    write_log(out / "log.csv", result.log)
    cell = CellResult(kind, manifest.name, fold, seed, top1, top5)
    doc = dict(dataclasses.asdict(cell), best_epoch=result.best_epoch,
               best_val_loss=result.best_val_loss, test_samples=len(split.test))
    (out / "result.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    log.info("%s fold %d seed %d: top1 %.3f top5 %.3f", kind, fold, seed, top1, top5)
    return cell


def _run_cell_job(args):
    cfg, kind, fold, seed = args
    try:
        return run_cell(cfg, kind, fold, seed), None
    except SLRError as exc:
        return None, f"{kind}/{fold}/{seed}: {exc}"


def run_grid(cfg: ExperimentConfig, kinds: list[str], jobs: int = 1):
    """Run every missing (model, fold, seed) cell; returns ``(cells, failures)``."""
    manifest = load_manifest(cfg)
    fold_plan(cfg, manifest)  # fail fast on too few signers
    cells, todo = [], []
    for kind in kinds:
        cfg.with_kind(kind)
        for fold in range(cfg.folds):
            for seed in cfg.seeds:
                done = read_cell(cell_dir(cfg, kind, fold, seed))
                if done is not None:
                    cells.append(done)
                else:
                    todo.append((cfg, kind, fold, seed))
    failures = []
    if jobs > 1 and len(todo) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as pool:
            outcomes = list(pool.map(_run_cell_job, todo))
    else:
        outcomes = [_run_cell_job(t) for t in todo]
    for cell, err in outcomes:
        if err:
            failures.append(err)
        else:
            cells.append(cell)
    return cells, failures


def reports_for(cfg: ExperimentConfig, kinds: list[str], cells: list[CellResult]):
    return [aggregate([c for c in cells if c.model == k], range(cfg.folds), cfg.seeds) for k in kinds]
