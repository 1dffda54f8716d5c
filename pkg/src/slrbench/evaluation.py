"""Top-k metrics, signer-independent folds, checkpoint evaluation and cross-run aggregation."""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .datapipe.io import DatasetManifest, LandmarkSequence
from .errors import ParameterError, ProtocolError
from .numerics import Rng


def top_k_accuracy(logits: np.ndarray, truths, k: int) -> float:
    """Fraction of rows whose truth ranks among the ``k`` largest logits.

    Ranking is by descending logit, equal logits ordered by ascending class
    index, so a tie at the k-th place admits the lower class first.
    """
    logits = np.asarray(logits)
    truths = np.asarray(truths, dtype=np.int64)
    n, classes = logits.shape
    if not 1 <= k <= classes:
        raise ParameterError(f"k={k} outside [1, {classes}]")
    if n == 0:
        raise ProtocolError("top-k accuracy of an empty set")
    target = logits[np.arange(n), truths][:, None]
    ahead = (logits > target) | ((logits == target) & (np.arange(classes)[None, :] < truths[:, None]))
    rank = ahead.sum(axis=1)
    return float(np.mean(rank < k))


# ---------------------------------------------------------------- folds

@dataclass
class FoldSplit:
    test_signers: list[str]
    val_signer: str
    train: list[str]
    val: list[str]
    test: list[str]


@dataclass
class FoldPlan:
    assignments: dict[str, int]
    folds: list[FoldSplit]

    def to_json(self) -> dict:
        return {"assignments": self.assignments, "folds": [asdict(f) for f in self.folds]}

    @classmethod
    def from_json(cls, doc: dict) -> "FoldPlan":
        return cls(dict(doc["assignments"]), [FoldSplit(**f) for f in doc["folds"]])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "FoldPlan":
        return cls.from_json(json.loads(Path(path).read_text()))


def signer_independent_folds(manifest: DatasetManifest, folds: int = 5, rng: Rng | None = None) -> FoldPlan:
    """Deal shuffled signers round-robin into folds; one other signer per fold validates."""
    rng = rng or Rng(42, "folds")
    signers = manifest.signers
    if len(signers) < folds:
        raise ProtocolError(f"{len(signers)} signers cannot fill {folds} signer-independent folds")
    order = rng.child("deal").permutation(len(signers))
    assignments = {signers[i]: pos % folds for pos, i in enumerate(order)}
    by_signer: dict[str, list[str]] = {s: [] for s in signers}
    for entry in manifest.samples:
        by_signer[entry.signer].append(entry.id)
    splits = []
    for f in range(folds):
        test_signers = sorted(s for s in signers if assignments[s] == f)
        rest = [s for s in signers if assignments[s] != f]
        if len(rest) < 2:
            raise ProtocolError(f"fold {f} leaves fewer than two signers for training and validation")
        val_signer = rest[int(rng.child(f"val{f}").integers(len(rest)))]
        train_signers = [s for s in rest if s != val_signer]
        splits.append(FoldSplit(
            test_signers=test_signers,
            val_signer=val_signer,
            train=[i for s in train_signers for i in by_signer[s]],
            val=list(by_signer[val_signer]),
            test=[i for s in test_signers for i in by_signer[s]],
        ))
    return FoldPlan(assignments, splits)


# ---------------------------------------------------------------- evaluation

def evaluate(cfg, params: dict, seqs: list[LandmarkSequence], batch_size: int = 256) -> tuple[float, float]:
    """Top-1 and Top-5 (Top-K when fewer than five classes) with inference preprocessing."""
    from . import models
    from .datapipe import prepare_eval, stack

    if not seqs:
        raise ProtocolError("cannot evaluate an empty test set")
    x, y = stack(prepare_eval(seqs))
    logits = np.concatenate([models.predict(params, cfg, x[i : i + batch_size])
                             for i in range(0, len(x), batch_size)])
    return top_k_accuracy(logits, y, 1), top_k_accuracy(logits, y, min(5, cfg.num_classes))


def evaluate_checkpoint(path, seqs: list[LandmarkSequence]) -> tuple[float, float]:
    from .models import load_checkpoint

    cfg, params, _ = load_checkpoint(path)
    return evaluate(cfg, params, seqs)


# ---------------------------------------------------------------- aggregation

RESULT_FIELDS = ("model", "dataset", "fold", "seed", "top1", "top5")


@dataclass(frozen=True)
class CellResult:
    model: str
    dataset: str
    fold: int
    seed: int
    top1: float
    top5: float


@dataclass
class RunReport:
    model: str
    dataset: str
    cells: list[CellResult] = field(default_factory=list)
    top1_mean: float = 0.0
    top1_std: float = 0.0
    top5_mean: float = 0.0
    top5_std: float = 0.0


def aggregate(cells: list[CellResult], folds=range(5), seeds=(42, 43, 44)) -> RunReport:
    """Mean and sample standard deviation over a complete fold x seed grid for one model."""
    folds, seeds = list(folds), list(seeds)
    if not cells:
        raise ProtocolError("nothing to aggregate")
    models_seen = {(c.model, c.dataset) for c in cells}
    if len(models_seen) != 1:
        raise ProtocolError(f"aggregate expects one model/dataset, got {sorted(models_seen)}")
    grid = {(c.fold, c.seed): c for c in cells}
    missing = [(f, s) for f in folds for s in seeds if (f, s) not in grid]
    if missing:
        raise ProtocolError(f"incomplete grid, missing (fold, seed) cells {missing}")
    chosen = [grid[(f, s)] for f in folds for s in seeds]
    top1 = [c.top1 for c in chosen]
    top5 = [c.top5 for c in chosen]
    spread = statistics.stdev if len(chosen) > 1 else (lambda v: 0.0)
    model, dataset = models_seen.pop()
    return RunReport(model, dataset, chosen, statistics.fmean(top1), spread(top1),
                     statistics.fmean(top5), spread(top5))


def write_results_csv(path, reports: list[RunReport]) -> None:
    """One row per cell, then ``mean`` and ``std`` rows per model."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_FIELDS)
        for r in reports:
            for c in r.cells:
                w.writerow([c.model, c.dataset, c.fold, c.seed, repr(c.top1), repr(c.top5)])
        for r in reports:
            w.writerow([r.model, r.dataset, "mean", "all", repr(r.top1_mean), repr(r.top5_mean)])
            w.writerow([r.model, r.dataset, "std", "all", repr(r.top1_std), repr(r.top5_std)])


_DISPLAY = {"convlstm": "ConvLSTM", "transformer": "Vanilla Transformer"}


def markdown_table(reports: list[RunReport]) -> str:
    """Model rows against per-dataset Top-1/Top-5 columns, as mean ± std percentages."""
    datasets = sorted({r.dataset for r in reports})
    models_order = list(dict.fromkeys(r.model for r in reports))
    by_key = {(r.model, r.dataset): r for r in reports}
    head = "| Model | " + " | ".join(f"{d} Top-1 | {d} Top-5" for d in datasets) + " |"
    rule = "|---|" + "---|---|" * len(datasets)
    lines = [head, rule]
    for m in models_order:
        cols = []
        for d in datasets:
            r = by_key.get((m, d))
            if r is None:
                cols += ["n/a", "n/a"]
            else:
                cols += [f"{100 * r.top1_mean:.1f}% ± {100 * r.top1_std:.1f}",
                         f"{100 * r.top5_mean:.1f}% ± {100 * r.top5_std:.1f}"]
        lines.append(f"| {_DISPLAY.get(m, m)} | " + " | ".join(cols) + " |")
    return "\n".join(lines) + "\n"
