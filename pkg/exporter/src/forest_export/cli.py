"""forest-export command line."""

from __future__ import annotations

import argparse
import sys

from .datasets import SHAPES
from .export import ExportConfig, ExportError, export_model


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="forest-export",
        description="Train a small ensemble on a seeded synthetic dataset "
                    "and dump it in the exchange format.")
    ap.add_argument("--dataset", default="magic",
                    choices=sorted(SHAPES) + ["two-point"])
    ap.add_argument("--library", default="rf", choices=("rf", "gbt", "xgb"))
    ap.add_argument("--trees", type=int, default=128)
    ap.add_argument("--max-leaves", type=int, default=64, choices=(32, 64))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--split", type=float, default=0.2)
    ap.add_argument("--out-dir", default="exports")
    ap.add_argument("--paper-scale", action="store_true",
                    help="use the reference ensemble size (1024 trees)")
    args = ap.parse_args(argv)
    trees = 1024 if args.paper_scale else args.trees
    config = ExportConfig(dataset=args.dataset, library=args.library,
                          n_trees=trees, max_leaves=args.max_leaves,
                          seed=args.seed, split_ratio=args.split,
                          out_dir=args.out_dir)
    try:
        result = export_model(config)
    except (ExportError, ValueError, ImportError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"model: {result.model_path}")
    print(f"train: {result.train_path}")
    print(f"test:  {result.test_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
