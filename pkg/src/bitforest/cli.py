"""Command-line harness: convert, quantize, verify, bench, accuracy,
merge-stats. Reports go to stdout as aligned text; --out writes CSV."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bench as bench_mod
from .data import load_dataset
from .forest import ModelError, forests_equivalent, serialize_forest, validate
from .quantize import (InfeasibleScaleError, QuantizationSpec, QuantizedForest,
                       choose_scale, parse_model, quantize_forest,
                       serialize_quantized)


def _load_model(path: str):
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def _load_data(args):
    return load_dataset(args.data, fmt=args.format, label_col=args.label_col,
                        n_features=args.n_features)


def _add_data_args(p) -> None:
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--format", choices=("csv", "svmlight"), default="csv")
    p.add_argument("--label-col", default=None,
                   help="CSV label column name (default: 'label' or last column)")
    p.add_argument("--n-features", type=int, default=None,
                   help="feature count for svmlight files")


def cmd_convert(args) -> int:
    model = _load_model(args.model)
    base = getattr(model, "forest", model)
    report = validate(base)
    if not report.ok:
        for issue in report.errors():
            print(f"error: {issue.message} (tree {issue.tree}, node {issue.node})")
        return 1
    doc = serialize_quantized(model) if isinstance(model, QuantizedForest) \
        else serialize_forest(model)
    reparsed = parse_model(doc)
    rebase = getattr(reparsed, "forest", reparsed)
    if not forests_equivalent(base, rebase):
        print("error: serialize/parse round-trip changed the model")
        return 1
    M = base.n_trees
    print(f"ok: {M} trees, max {base.max_leaves} leaves, "
          f"{base.n_features} features, {base.n_classes} classes, "
          f"comparison={base.comparison}, task={base.task}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(doc)
        print(f"wrote normalized document to {args.out}")
    return 0


def cmd_quantize(args) -> int:
    model = _load_model(args.model)
    if isinstance(model, QuantizedForest):
        print("error: model is already quantized")
        return 1
    splits, leaves = args.splits, args.leaves
    if not splits and not leaves:
        splits = leaves = True
    if args.scale is not None:
        scale = args.scale
    else:
        try:
            scale = choose_scale(model, args.width)
        except InfeasibleScaleError as e:
            print(f"error: {e}")
            return 1
        print(f"chose scale {scale} (2^{scale.bit_length() - 1})")
    try:
        q = quantize_forest(model, QuantizationSpec(scale=scale, width=args.width,
                                                    splits=splits, leaves=leaves))
    except ModelError as e:
        print(f"error: {e}")
        return 1
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(serialize_quantized(q))
    print(f"wrote quantized model (scale={scale}, width={args.width}, "
          f"splits={splits}, leaves={leaves}) to {args.out}")
    return 0


def cmd_verify(args) -> int:
    model = _load_model(args.model)
    dataset = _load_data(args)
    impls = [s.strip() for s in args.impls.split(",") if s.strip()]
    prepared = bench_mod.PreparedModel(model)
    report = bench_mod.verify_equivalence(model, dataset, impls, prepared=prepared)
    print(report.summary())
    if args.out:
        lines = ["implementation,checksum,ok"]
        for impl in report.implementations:
            ok = not any(m.implementation == impl for m in report.mismatches)
            lines.append(f"{impl},{report.checksums[impl]},{ok}")
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    if args.scores_out:
        X = prepared.prepare_inputs(dataset.features)
        scores, _ = bench_mod.score_matrix(prepared, X, "naive")
        C = scores.shape[1]
        header = "instance,prediction," + ",".join(f"score_{c}" for c in range(C))
        lines = [header]
        for i in range(scores.shape[0]):
            pred = int(np.argmax(scores[i]))
            vals = ",".join(repr(float(v)) if scores.dtype == np.float64 else str(int(v))
                            for v in scores[i])
            lines.append(f"{i},{pred},{vals}")
        with open(args.scores_out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return 0 if report.ok else 1


def cmd_bench(args) -> int:
    model = _load_model(args.model)
    if isinstance(model, QuantizedForest):
        print("error: pass the float model to --model; quantized rows come from "
              "--quantized or --quantize-scale")
        return 1
    quantized = None
    if args.quantized:
        quantized = _load_model(args.quantized)
        if not isinstance(quantized, QuantizedForest):
            print("error: --quantized file is not a quantized model")
            return 1
    elif args.quantize_scale is not None:
        quantized = quantize_forest(model, QuantizationSpec(
            scale=args.quantize_scale, width=args.quantize_width))
    dataset = _load_data(args)
    impls = [s.strip() for s in args.impls.split(",") if s.strip()]
    config = bench_mod.BenchConfig(implementations=impls, warmup=args.warmup,
                                   reps=args.reps, batch=args.batch,
                                   threads=args.threads)
    report = bench_mod.run_benchmark(model, dataset, config,
                                     quantized_model=quantized,
                                     model_name=args.model)
    print(report.to_text())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
        print(f"wrote CSV to {args.out}")
    return 0


def cmd_accuracy(args) -> int:
    model = _load_model(args.model)
    if isinstance(model, QuantizedForest):
        print("error: accuracy starts from the float model")
        return 1
    dataset = _load_data(args)
    scale = args.scale if args.scale is not None else choose_scale(model, args.width)
    table = bench_mod.accuracy_report(model, dataset,
                                      QuantizationSpec(scale=scale, width=args.width))
    print(table.to_text())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(table.to_csv())
    return 0


def cmd_merge_stats(args) -> int:
    model = _load_model(args.model)
    quantized = None
    if args.quantized:
        quantized = _load_model(args.quantized)
    elif args.scale is not None:
        quantized = quantize_forest(model, QuantizationSpec(
            scale=args.scale, width=args.width, splits=True, leaves=True))
    stats = bench_mod.merge_stats(model, quantized)
    print(stats.to_text())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(stats.to_csv())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bitforest",
        description="Bitvector tree-ensemble inference: convert, quantize, "
                    "verify, and benchmark models in the JSON exchange format.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="validate a model document and round-trip it")
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=None, help="write the normalized document here")
    p.set_defaults(fn=cmd_convert)

    p = sub.add_parser("quantize", help="fixed-point quantize a model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=int, default=None,
                   help="explicit scale (default: largest feasible power of two)")
    p.add_argument("--width", type=int, choices=(16, 32), default=16)
    p.add_argument("--splits", action="store_true", help="quantize split thresholds")
    p.add_argument("--leaves", action="store_true", help="quantize leaf values")
    p.set_defaults(fn=cmd_quantize)

    p = sub.add_parser("verify", help="cross-check implementations on a dataset")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--impls", default="naive,ie,na,qs,vqs,rs")
    p.add_argument("--out", default=None, help="write per-impl checksums as CSV")
    p.add_argument("--scores-out", default=None,
                   help="write reference scores and predictions as CSV")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("bench", help="latency benchmark")
    p.add_argument("--model", required=True, help="float model document")
    _add_data_args(p)
    p.add_argument("--impls", default="naive,ie,na,qs,vqs,rs")
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--batch", type=int, default=None,
                   help="limit the timed pass to this many instances")
    p.add_argument("--threads", type=int, default=1,
                   help="partition instances across worker threads")
    p.add_argument("--quantized", default=None,
                   help="quantized model document for q-rows")
    p.add_argument("--quantize-scale", type=int, default=None,
                   help="derive the quantized rows at this scale")
    p.add_argument("--quantize-width", type=int, choices=(16, 32), default=16)
    p.add_argument("--out", default=None, help="write rows as CSV")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("accuracy", help="accuracy of the four quantization variants")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--scale", type=int, default=None)
    p.add_argument("--width", type=int, choices=(16, 32), default=16)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_accuracy)

    p = sub.add_parser("merge-stats", help="unique-node fraction before/after quantization")
    p.add_argument("--model", required=True)
    p.add_argument("--quantized", default=None)
    p.add_argument("--scale", type=int, default=None)
    p.add_argument("--width", type=int, choices=(16, 32), default=16)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_merge_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ModelError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
