"""Command-line entry point: ``slrbench {synth,train,crossval,eval}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .datapipe import DatasetManifest, synth_generate
from .errors import ConfigError, ProtocolError, RefusalError, SLRError
from .evaluation import FoldPlan, evaluate, markdown_table, write_results_csv
from .experiment import dump_config, load_config, reports_for, run_cell, run_grid
from .models import KINDS, load_checkpoint
from .numerics import Rng

EXIT_CODES = {"error": 1, "config": 3, "format": 4, "data": 5, "protocol": 6,
              "parameter": 7, "dimension": 8, "evaluation": 9, "refused": 10}


def cmd_synth(args) -> int:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise RefusalError(f"{out} is not empty; pass --force to overwrite")
    manifest = synth_generate(args.classes, args.signers, args.per_class, Rng(args.seed, "synth"),
                              name=args.name)
    out.mkdir(parents=True, exist_ok=True)
    path = manifest.save(out)
    print(f"wrote {len(manifest.samples)} samples and {path}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        cfg = _with_output(cfg, args.out)
    cell = run_cell(cfg, args.model, args.fold, args.seed)
    print(f"{cell.model} fold {cell.fold} seed {cell.seed}: top1={cell.top1:.4f} top5={cell.top5:.4f}")
    return 0


def cmd_crossval(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        cfg = _with_output(cfg, args.out)
    kinds = [k.strip() for k in args.models.split(",") if k.strip()]
    for k in kinds:
        if k not in KINDS:
            raise ConfigError(f"--models: unknown model {k!r}")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_config(cfg))
    cells, failures = run_grid(cfg, kinds, args.jobs)
    if failures:
        for f in failures:
            print(f"cell failed: {f}", file=sys.stderr)
        raise ProtocolError(f"grid incomplete: {len(failures)} failed cell(s); aggregate not run")
    reports = reports_for(cfg, kinds, cells)
    write_results_csv(out / "results.csv", reports)
    table = markdown_table(reports)
    (out / "results.md").write_text(table)
    print(table, end="")
    return 0


def cmd_eval(args) -> int:
    cfg, params, meta = load_checkpoint(args.checkpoint)
    manifest = DatasetManifest.load(args.manifest)
    if manifest.classes != cfg.num_classes:
        raise ConfigError(f"checkpoint has {cfg.num_classes} classes, manifest {manifest.classes}")
    ids = None
    if args.fold_plan is not None:
        if args.fold is None:
            raise ConfigError("--fold-plan needs --fold")
        ids = FoldPlan.load(args.fold_plan).folds[args.fold].test
    top1, top5 = evaluate(cfg, params, manifest.sequences(ids))
    print(f"top1={top1!r} top5={top5!r}")
    if args.k is not None:
        from .datapipe import prepare_eval, stack
        from .evaluation import top_k_accuracy
        from .models import predict
        x, y = stack(prepare_eval(manifest.sequences(ids)))
        print(f"top{args.k}={top_k_accuracy(predict(params, cfg, x), y, args.k)!r}")
    results = Path(args.results) if args.results else Path(args.checkpoint).with_name("eval.csv")
    new = not results.exists()
    with open(results, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(("model", "dataset", "fold", "seed", "top1", "top5"))
        w.writerow((cfg.kind, manifest.name, meta.get("fold", ""), meta.get("seed", ""), repr(top1), repr(top5)))
    return 0


def _with_output(cfg, out):
    import dataclasses
    return dataclasses.replace(cfg, output_dir=str(out))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slrbench", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic landmark dataset")
    s.add_argument("--classes", type=int, default=5)
    s.add_argument("--signers", type=int, default=6)
    s.add_argument("--per-class", type=int, default=40)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--name", default="synthetic")
    s.add_argument("--out", required=True)
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train one (model, fold, seed) cell")
    t.add_argument("--config", required=True)
    t.add_argument("--model", required=True, choices=KINDS)
    t.add_argument("--fold", type=int, required=True)
    t.add_argument("--seed", type=int, default=42)
    t.add_argument("--out", help="override run.output_dir")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("crossval", help="run the signer-independent fold x seed grid")
    c.add_argument("--config", required=True)
    c.add_argument("--models", default="convlstm,transformer")
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--out", help="override run.output_dir")
    c.set_defaults(func=cmd_crossval)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--fold-plan")
    e.add_argument("--fold", type=int)
    e.add_argument("--k", type=int)
    e.add_argument("--results", help="CSV to append the result row to")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SLRError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)


if __name__ == "__main__":
    sys.exit(main())
