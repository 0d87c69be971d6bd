"""Cross-implementation verification, latency benchmarking, and the
accuracy / node-merging reports.

Timing methodology: a monotonic clock around whole-dataset scoring loops,
warmup passes discarded, the median of the measured passes reported, and
per-instance latency = median pass time / instances. If a single pass is
too short for the timer, the pass is repeated inside the timed region and
a note is attached. Speedups are always relative to the float NA row, for
quantized rows too.
"""

from __future__ import annotations

import hashlib
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baseline import build_ie, build_native, ie_score_with_leaves, na_score_with_leaves
from .data import Dataset
from .forest import Forest, naive_score_with_leaves
from .quantize import QuantizationSpec, QuantizedForest, quantize_forest, quantize_instances, unwrap
from .quickscorer import build_qs_model, qs_score_with_leaves
from .rapidscorer import (RS_BATCH, build_rs_model, rs_score_batch_with_leaves,
                          unique_node_fraction)
from .vqs import deinterleave, lane_width, vqs_score_batch_with_leaves

IMPLEMENTATIONS = ("naive", "ie", "na", "qs", "vqs", "rs")
FLOAT_RTOL = 1e-6


class PreparedModel:
    """Every compiled form of one model, built once and reused."""

    def __init__(self, model, name: str = "model"):
        self.model = model
        self.name = name
        _, self.spec = unwrap(model)
        self.qs = build_qs_model(model)
        self.rs = build_rs_model(self.qs)
        self.native = build_native(model)
        self.ie = build_ie(model)
        self.v = lane_width(self.qs)

    @property
    def family(self) -> str:
        return "float" if self.spec is None else f"int{self.spec.width}"

    def prepare_inputs(self, X: np.ndarray) -> np.ndarray:
        """Instances in the model's comparison domain (quantized if needed)."""
        if self.spec is not None and self.spec.splits:
            return quantize_instances(X, self.spec.scale, self.spec.width)
        return np.asarray(X, dtype=np.float64)


def pad_batch(X: np.ndarray, size: int) -> np.ndarray:
    """Pad a short final batch by repeating the last instance."""
    n = X.shape[0]
    if n == size:
        return X
    if n > size or n == 0:
        raise ValueError(f"cannot pad {n} instances to {size}")
    return np.concatenate([X, np.repeat(X[-1:], size - n, axis=0)])


def score_matrix(prepared: PreparedModel, X: np.ndarray, impl: str):
    """(scores (N, C), exit leaves (N, M)) for one implementation.

    X must already be in the model's comparison domain. Lane outputs are
    de-interleaved from their class-major layout; padded instances of the
    final partial batch are discarded.
    """
    n = X.shape[0]
    C = prepared.qs.n_classes
    M = prepared.qs.n_trees
    scores = np.zeros((n, C), dtype=np.float64 if prepared.qs.leafvalues.dtype == np.float64 else np.int64)
    leaves = np.zeros((n, M), dtype=np.int64)
    if impl in ("naive", "ie", "na", "qs"):
        fns = {
            "naive": lambda row: naive_score_with_leaves(prepared.model, row),
            "ie": lambda row: ie_score_with_leaves(prepared.ie, row),
            "na": lambda row: na_score_with_leaves(prepared.native, row),
            "qs": lambda row: qs_score_with_leaves(prepared.qs, row),
        }
        fn = fns[impl]
        for i in range(n):
            s, lv = fn(X[i])
            scores[i, :] = s
            leaves[i, :] = lv
    elif impl in ("vqs", "rs"):
        width = prepared.v if impl == "vqs" else RS_BATCH
        fn = (lambda b: vqs_score_batch_with_leaves(prepared.qs, b)) if impl == "vqs" \
            else (lambda b: rs_score_batch_with_leaves(prepared.rs, b))
        for start in range(0, n, width):
            block = pad_batch(X[start:start + width], width)
            flat, blk_leaves = fn(block)
            take = min(width, n - start)
            scores[start:start + take, :] = deinterleave(flat, width, C)[:take]
            leaves[start:start + take, :] = blk_leaves[:take]
    else:
        raise ValueError(f"unknown implementation {impl!r}; "
                         f"choose from {', '.join(IMPLEMENTATIONS)}")
    return scores, leaves


def score_checksum(scores: np.ndarray) -> str:
    a = np.ascontiguousarray(scores)
    if a.dtype != np.float64:
        a = a.astype(np.int64)
    return hashlib.sha256(a.tobytes()).hexdigest()


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

@dataclass
class Mismatch:
    implementation: str
    kind: str          # "exit-leaf" or "score"
    instance: int
    tree: int | None = None
    detail: str = ""


@dataclass
class VerifyReport:
    ok: bool
    family: str
    n_instances: int
    implementations: list[str]
    checksums: dict[str, str]
    mismatches: list[Mismatch] = field(default_factory=list)

    def summary(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        lines = [f"verify [{self.family}] over {self.n_instances} instances: {status}"]
        for impl in self.implementations:
            lines.append(f"  {impl:>5}: checksum {self.checksums[impl][:16]}…")
        for m in self.mismatches[:10]:
            lines.append(f"  MISMATCH {m.implementation} {m.kind} at instance "
                         f"{m.instance}, tree {m.tree}: {m.detail}")
        return "\n".join(lines)


def verify_equivalence(model, dataset: Dataset, implementations=IMPLEMENTATIONS,
                       prepared: PreparedModel | None = None) -> VerifyReport:
    """Compare exit leaves and scores of the listed implementations.

    The naive traversal of the same model is the reference (run even when
    not listed). Exit leaves must match exactly; in the float family scores
    must agree within 1e-6 relative, in a quantized family bit-exactly.
    """
    prepared = prepared or PreparedModel(model)
    X = prepared.prepare_inputs(dataset.features)
    quantized_values = prepared.qs.leafvalues.dtype != np.float64
    ref_scores, ref_leaves = score_matrix(prepared, X, "naive")
    checksums: dict[str, str] = {}
    mismatches: list[Mismatch] = []
    for impl in implementations:
        scores, leaves = (ref_scores, ref_leaves) if impl == "naive" \
            else score_matrix(prepared, X, impl)
        checksums[impl] = score_checksum(scores)
        bad = np.argwhere(leaves != ref_leaves)
        if bad.size:
            i, h = (int(v) for v in bad[0])
            mismatches.append(Mismatch(impl, "exit-leaf", i, h,
                                       f"{leaves[i, h]} != {ref_leaves[i, h]}"))
            continue
        if quantized_values:
            close = scores == ref_scores
        else:
            close = np.isclose(scores, ref_scores, rtol=FLOAT_RTOL, atol=0.0)
        if not close.all():
            i, c = (int(v) for v in np.argwhere(~close)[0])
            mismatches.append(Mismatch(impl, "score", i, None,
                                       f"class {c}: {scores[i, c]} != {ref_scores[i, c]}"))
    return VerifyReport(ok=not mismatches, family=prepared.family,
                        n_instances=X.shape[0],
                        implementations=list(implementations),
                        checksums=checksums, mismatches=mismatches)


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

@dataclass
class BenchConfig:
    implementations: list[str] = field(default_factory=lambda: list(IMPLEMENTATIONS))
    warmup: int = 3
    reps: int = 5
    batch: int | None = None   # instances per timed pass (default: all)
    threads: int = 1
    min_pass_seconds: float = 0.005

    def __post_init__(self) -> None:
        if self.warmup < 1 or self.reps < 1:
            raise ValueError("warmup and reps must both be >= 1")


@dataclass
class BenchRow:
    implementation: str
    family: str
    model: str
    dataset: str
    n_instances: int
    batch: int
    warmup: int
    reps: int
    per_instance_us: float
    speedup_vs_na_float: float
    checksum: str
    threads: int = 1

    CSV_FIELDS = ("implementation", "family", "model", "dataset", "n_instances",
                  "batch", "warmup", "reps", "per_instance_us",
                  "speedup_vs_na_float", "checksum", "threads")


@dataclass
class BenchReport:
    rows: list[BenchRow]
    notes: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = [",".join(BenchRow.CSV_FIELDS)]
        for r in self.rows:
            lines.append(",".join(str(getattr(r, f)) for f in BenchRow.CSV_FIELDS))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        header = f"{'impl':>6} {'family':>7} {'per-inst µs':>12} {'speedup':>9}  checksum"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            speed = f"({r.speedup_vs_na_float:.2f}x)"
            lines.append(f"{r.implementation:>6} {r.family:>7} "
                         f"{r.per_instance_us:12.2f} {speed:>9}  {r.checksum[:16]}")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines)

    def row(self, impl: str, family: str) -> BenchRow:
        for r in self.rows:
            if r.implementation == impl and r.family == family:
                return r
        raise KeyError((impl, family))


def _make_pass_fn(prepared: PreparedModel, X: np.ndarray, impl: str, threads: int):
    n = X.shape[0]
    if impl in ("naive", "ie", "na", "qs"):
        fns = {
            "naive": lambda row: naive_score_with_leaves(prepared.model, row),
            "ie": lambda row: ie_score_with_leaves(prepared.ie, row),
            "na": lambda row: na_score_with_leaves(prepared.native, row),
            "qs": lambda row: qs_score_with_leaves(prepared.qs, row),
        }
        fn = fns[impl]

        def one_shard(lo: int, hi: int) -> None:
            for i in range(lo, hi):
                fn(X[i])
    else:
        width = prepared.v if impl == "vqs" else RS_BATCH
        fn = (lambda b: vqs_score_batch_with_leaves(prepared.qs, b)) if impl == "vqs" \
            else (lambda b: rs_score_batch_with_leaves(prepared.rs, b))

        def one_shard(lo: int, hi: int) -> None:
            for start in range(lo, hi, width):
                fn(pad_batch(X[start:start + width], width))

    if threads <= 1:
        return lambda: one_shard(0, n)

    bounds = np.linspace(0, n, threads + 1).astype(int)

    def parallel_pass() -> None:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = [pool.submit(one_shard, int(bounds[w]), int(bounds[w + 1]))
                    for w in range(threads)]
            for f in futs:
                f.result()

    return parallel_pass


def run_benchmark(float_model: Forest, dataset: Dataset, config: BenchConfig,
                  quantized_model: QuantizedForest | None = None,
                  model_name: str = "model") -> BenchReport:
    """Time the requested implementations; float and (optionally) quantized
    families share the float-NA baseline for the speedup column."""
    notes: list[str] = []
    prepared_list = [PreparedModel(float_model, model_name)]
    if quantized_model is not None:
        prepared_list.append(PreparedModel(quantized_model, model_name))

    impls = list(config.implementations)
    if "na" not in impls:
        impls = ["na"] + impls  # baseline must exist for the speedup column
        notes.append("added 'na' to implementations as the speedup baseline")

    X_full = np.asarray(dataset.features, dtype=np.float64)
    if config.batch is not None:
        X_full = X_full[:config.batch]
    n = X_full.shape[0]

    rows: list[BenchRow] = []
    timings: dict[tuple[str, str], float] = {}
    for prepared in prepared_list:
        X = prepared.prepare_inputs(X_full)
        for impl in impls:
            pass_fn = _make_pass_fn(prepared, X, impl, config.threads)
            for _ in range(config.warmup):
                pass_fn()
            t0 = time.perf_counter()
            pass_fn()
            first = time.perf_counter() - t0
            inner = 1
            if first < config.min_pass_seconds:
                inner = max(1, int(np.ceil(config.min_pass_seconds / max(first, 1e-9))))
                notes.append(f"{impl}/{prepared.family}: pass too short for the "
                             f"timer ({first * 1e6:.1f} µs), repeating x{inner} per rep")
            measured = [first / 1.0] if inner == 1 else []
            for _ in range(config.reps - len(measured)):
                t0 = time.perf_counter()
                for _ in range(inner):
                    pass_fn()
                measured.append((time.perf_counter() - t0) / inner)
            med = statistics.median(measured)
            timings[(impl, prepared.family)] = med
            scores, _ = score_matrix(prepared, X, impl)
            rows.append(BenchRow(
                implementation=impl, family=prepared.family, model=prepared.name,
                dataset=dataset.name or "dataset", n_instances=n,
                batch=n, warmup=config.warmup, reps=config.reps,
                per_instance_us=med / n * 1e6, speedup_vs_na_float=0.0,
                checksum=score_checksum(scores), threads=config.threads))

    base = timings[("na", prepared_list[0].family)]
    for row in rows:
        row.speedup_vs_na_float = base / timings[(row.implementation, row.family)]
    return BenchReport(rows=rows, notes=notes)


# ---------------------------------------------------------------------------
# accuracy
# ---------------------------------------------------------------------------

@dataclass
class AccuracyRow:
    variant: str   # e.g. "split: float / leaf: int16"
    accuracy: float


@dataclass
class AccuracyTable:
    rows: list[AccuracyRow]

    def by_variant(self) -> dict[str, float]:
        return {r.variant: r.accuracy for r in self.rows}

    def to_csv(self) -> str:
        lines = ["variant,accuracy"]
        lines.extend(f"{r.variant},{r.accuracy}" for r in self.rows)
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        w = max(len(r.variant) for r in self.rows)
        return "\n".join(f"{r.variant:<{w}}  {r.accuracy * 100:6.2f}%"
                         for r in self.rows)


def predictions(prepared: PreparedModel, X: np.ndarray, impl: str = "vqs") -> np.ndarray:
    """argmax class per instance from de-interleaved scores (ties -> lower id)."""
    scores, _ = score_matrix(prepared, prepared.prepare_inputs(X), impl)
    return np.argmax(scores, axis=1)


def accuracy_report(float_model: Forest, dataset: Dataset,
                    spec: QuantizationSpec, impl: str = "vqs") -> AccuracyTable:
    """Accuracy of the four split/leaf quantization combinations."""
    if float_model.task != "classification":
        raise ValueError("accuracy_report requires a classification model")
    iname = f"int{spec.width}"
    variants = [
        ("split: float / leaf: float", float_model),
        (f"split: float / leaf: {iname}",
         quantize_forest(float_model, QuantizationSpec(spec.scale, spec.width,
                                                       splits=False, leaves=True))),
        (f"split: {iname} / leaf: float",
         quantize_forest(float_model, QuantizationSpec(spec.scale, spec.width,
                                                       splits=True, leaves=False))),
        (f"split: {iname} / leaf: {iname}",
         quantize_forest(float_model, QuantizationSpec(spec.scale, spec.width,
                                                       splits=True, leaves=True))),
    ]
    labels = dataset.labels.astype(np.int64)
    rows = []
    for name, model in variants:
        pred = predictions(PreparedModel(model), dataset.features, impl)
        rows.append(AccuracyRow(name, float(np.mean(pred == labels))))
    return AccuracyTable(rows)


# ---------------------------------------------------------------------------
# merge stats
# ---------------------------------------------------------------------------

@dataclass
class MergeStats:
    float_fraction: float
    quantized_fraction: float | None = None

    def to_text(self) -> str:
        lines = [f"unique nodes kept (float): {self.float_fraction * 100:.1f}%"]
        if self.quantized_fraction is not None:
            lines.append(
                f"unique nodes kept (quantized): {self.quantized_fraction * 100:.1f}%")
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = ["model,unique_fraction", f"float,{self.float_fraction}"]
        if self.quantized_fraction is not None:
            lines.append(f"quantized,{self.quantized_fraction}")
        return "\n".join(lines) + "\n"


def merge_stats(model, quantized_model=None) -> MergeStats:
    """Unique-(feature, threshold) fraction; quantization never raises it."""
    f = unique_node_fraction(build_qs_model(model))
    q = None
    if quantized_model is not None:
        q = unique_node_fraction(build_qs_model(quantized_model))
    return MergeStats(float_fraction=f, quantized_fraction=q)
