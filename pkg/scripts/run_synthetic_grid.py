"""Generate the 5-class synthetic dataset and run the full desk-scale cross-validation grid.

    python3 scripts/run_synthetic_grid.py [--out runs/desk] [--jobs 1]

Writes the dataset under ``<out>/data`` and the grid (cells, results.csv,
results.md) under ``<out>/grid``.  Re-running resumes unfinished cells.
"""

import argparse
import dataclasses
import sys
import time
from pathlib import Path

from slrbench.cli import main as cli
from slrbench.experiment import dump_config, load_config

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--config", default=str(ROOT / "configs/desk.ini"))
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    out = Path(args.out)
    data = out / "data"
    if not (data / "manifest.json").exists():
        code = cli(["synth", "--classes", "5", "--signers", "6", "--per-class", "40",
                    "--seed", "42", "--out", str(data)])
        if code:
            return code
    cfg = dataclasses.replace(load_config(args.config), data_root=str(data), output_dir=str(out / "grid"))
    out.mkdir(parents=True, exist_ok=True)
    resolved = out / "desk.ini"
    resolved.write_text(dump_config(cfg))

    start = time.perf_counter()
    code = cli(["-v", "crossval", "--config", str(resolved), "--jobs", str(args.jobs)])
    print(f"grid finished in {(time.perf_counter() - start) / 60:.1f} min (exit {code})")
    return code


if __name__ == "__main__":
    sys.exit(main())
