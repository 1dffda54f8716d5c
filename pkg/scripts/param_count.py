"""Print parameter counts per tensor group for the models a config describes.

    python3 scripts/param_count.py configs/reference.ini --classes 100
"""

import argparse
import dataclasses
from collections import defaultdict

from slrbench.experiment import load_config
from slrbench.models import param_count, param_shapes


def main() -> None:
    ap = argparse.ArgumentParser(description="parameter counts for both model kinds")
    ap.add_argument("config")
    ap.add_argument("--classes", type=int, help="override model.num_classes")
    args = ap.parse_args()
    cfg = load_config(args.config)
    for kind in ("convlstm", "transformer"):
        model = cfg.with_kind(kind).model
        if args.classes:
            model = dataclasses.replace(model, num_classes=args.classes)
        groups: dict[str, int] = defaultdict(int)
        for name, shape in param_shapes(model).items():
            size = 1
            for d in shape:
                size *= d
            groups[name.split(".")[0] if not name.startswith("layer") else "layers"] += size
        print(f"{kind}: {param_count(model):,} parameters")
        for g, n in groups.items():
            print(f"  {g:<8} {n:>12,}")


if __name__ == "__main__":
    main()
