import numpy as np
import pytest

from bitforest.bench import (BenchConfig, PreparedModel, accuracy_report,
                             merge_stats, pad_batch, run_benchmark,
                             score_checksum, score_matrix, verify_equivalence)
from bitforest.data import Dataset
from bitforest.forest import Forest
from bitforest.quantize import QuantizationSpec, quantize_forest
from bitforest.synthetic import duplicated_forest, random_forest, random_instances

from conftest import make_stump_tree


def dataset_from(X, labels=None, name="ds"):
    labels = np.zeros(len(X)) if labels is None else np.asarray(labels, float)
    return Dataset(np.asarray(X, float), labels, name=name)


def test_verify_stump_passes(stump):
    ds = dataset_from([[0.1], [0.4], [0.6], [0.9]])
    report = verify_equivalence(stump, ds)
    assert report.ok
    assert len(set(report.checksums.values())) == 1  # all impls agree


def test_verify_detects_corrupted_bitmask(stump):
    ds = dataset_from([[0.1], [0.4], [0.6], [0.9]])
    prepared = PreparedModel(stump)
    prepared.qs.masks[0] = np.uint64(0b01)  # wrong subtree cleared
    report = verify_equivalence(stump, ds, implementations=("naive", "qs"),
                                prepared=prepared)
    assert not report.ok
    first = report.mismatches[0]
    assert first.implementation == "qs"
    assert first.tree == 0
    assert first.kind == "exit-leaf"


def test_verify_random_forest_all_impls(rng):
    forest = random_forest(rng, n_trees=10, max_leaves=32, n_features=5,
                           n_classes=3)
    ds = dataset_from(random_instances(rng, 100, 5))
    assert verify_equivalence(forest, ds).ok
    q = quantize_forest(forest, QuantizationSpec(2 ** 15, 16))
    report = verify_equivalence(q, ds)
    assert report.ok and report.family == "int16"


def test_pad_batch_repeats_last():
    X = np.array([[1.0], [2.0]])
    out = pad_batch(X, 5)
    assert out.shape == (5, 1)
    assert list(out[:, 0]) == [1.0, 2.0, 2.0, 2.0, 2.0]
    with pytest.raises(ValueError):
        pad_batch(X, 1)


def test_score_matrix_discards_padding(rng):
    # 7 rows is not a multiple of 4 or 16
    forest = random_forest(rng, n_trees=6, max_leaves=16, n_features=4,
                           n_classes=2)
    prepared = PreparedModel(forest)
    X = random_instances(rng, 7, 4)
    ref, ref_leaves = score_matrix(prepared, X, "qs")
    for impl in ("vqs", "rs"):
        scores, leaves = score_matrix(prepared, X, impl)
        assert scores.shape == (7, 2)
        assert np.array_equal(scores, ref)
        assert np.array_equal(leaves, ref_leaves)


def test_qs_block_output_is_instance_major(rng):
    forest = random_forest(rng, n_trees=4, max_leaves=8, n_features=3,
                           n_classes=3)
    prepared = PreparedModel(forest)
    X = random_instances(rng, 5, 3)
    scores, _ = score_matrix(prepared, X, "qs")
    flat = np.ascontiguousarray(scores).ravel()
    for i in range(5):
        for c in range(3):
            assert flat[i * 3 + c] == scores[i, c]


def test_benchmark_single_row_and_baseline_injection(rng, stump):
    ds = dataset_from(random_instances(rng, 50, 1))
    config = BenchConfig(implementations=["qs"], warmup=1, reps=2)
    report = run_benchmark(stump, ds, config)
    impls = {r.implementation for r in report.rows}
    assert impls == {"na", "qs"}  # na auto-added as the speedup baseline
    assert any("baseline" in n for n in report.notes)
    na_row = report.row("na", "float")
    assert na_row.speedup_vs_na_float == pytest.approx(1.0)


def test_benchmark_quantized_rows_share_float_baseline(rng):
    forest = random_forest(rng, n_trees=8, max_leaves=16, n_features=4)
    q = quantize_forest(forest, QuantizationSpec(2 ** 15, 16))
    ds = dataset_from(random_instances(rng, 64, 4))
    config = BenchConfig(implementations=["na", "qs"], warmup=1, reps=2)
    report = run_benchmark(forest, ds, config, quantized_model=q)
    families = {r.family for r in report.rows}
    assert families == {"float", "int16"}
    # speedups are all relative to float NA
    na = report.row("na", "float")
    for r in report.rows:
        assert r.speedup_vs_na_float == pytest.approx(
            na.per_instance_us / r.per_instance_us, rel=1e-9)


def test_benchmark_checksums_deterministic(rng):
    forest = random_forest(rng, n_trees=6, max_leaves=16, n_features=4)
    ds = dataset_from(random_instances(rng, 32, 4))
    config = BenchConfig(implementations=["qs", "vqs", "rs"], warmup=1, reps=2)
    r1 = run_benchmark(forest, ds, config)
    r2 = run_benchmark(forest, ds, config)
    assert [r.checksum for r in r1.rows] == [r.checksum for r in r2.rows]
    assert len({r.checksum for r in r1.rows}) == 1


def test_benchmark_threads_mode(rng):
    forest = random_forest(rng, n_trees=6, max_leaves=16, n_features=4)
    ds = dataset_from(random_instances(rng, 64, 4))
    config = BenchConfig(implementations=["qs"], warmup=1, reps=2, threads=2)
    report = run_benchmark(forest, ds, config)
    assert all(r.threads == 2 for r in report.rows)


def test_benchmark_csv_shape(rng, stump):
    ds = dataset_from(random_instances(rng, 16, 1))
    report = run_benchmark(stump, ds, BenchConfig(implementations=["na"],
                                                  warmup=1, reps=1))
    csv_text = report.to_csv()
    lines = csv_text.strip().splitlines()
    assert lines[0].startswith("implementation,family,model")
    assert len(lines) == 1 + len(report.rows)
    assert report.to_text()


def test_bench_config_validation():
    with pytest.raises(ValueError):
        BenchConfig(warmup=0)
    with pytest.raises(ValueError):
        BenchConfig(reps=0)


# ---------------------------------------------------------------------------
# accuracy
# ---------------------------------------------------------------------------

def one_hot_memorizer():
    """A stump that classifies x<=0.5 as class 0, else class 1, perfectly."""
    tree = make_stump_tree(0, 0.5, (0.9, 0.1), (0.1, 0.9))
    return Forest(trees=[tree], n_features=1, n_classes=2,
                  task="classification")


def test_accuracy_memorized_model_is_perfect():
    model = one_hot_memorizer()
    X = np.array([[0.1], [0.3], [0.6], [0.8]])
    y = np.array([0, 0, 1, 1], dtype=float)
    table = accuracy_report(model, Dataset(X, y), QuantizationSpec(2 ** 15, 16))
    assert all(r.accuracy == 1.0 for r in table.rows)
    assert len(table.rows) == 4


def collision_fixture():
    """Rows that flip under split quantization at s=2^15.

    gamma and the probe value both floor to 16384, so the quantized model
    sends the probe left while the float model sends it right.
    """
    tree = make_stump_tree(0, 0.500001, (0.9, 0.1), (0.1, 0.9))
    model = Forest(trees=[tree], n_features=1, n_classes=2,
                   task="classification")
    X = np.array([[0.500002]] * 4 + [[0.2], [0.8], [0.3], [0.9]])
    y = np.array([1] * 4 + [0, 1, 0, 1], dtype=float)
    return model, Dataset(X, y)


def test_accuracy_split_quantization_strictly_lower_on_collision():
    model, ds = collision_fixture()
    table = accuracy_report(model, ds, QuantizationSpec(2 ** 15, 16))
    acc = table.by_variant()
    assert acc["split: float / leaf: float"] == 1.0
    assert acc["split: int16 / leaf: float"] < 1.0
    assert acc["split: int16 / leaf: int16"] < 1.0
    assert acc["split: float / leaf: int16"] == 1.0


def test_accuracy_well_separated_thresholds_all_variants_equal(rng):
    # thresholds and data far from any floor boundary: four equal columns
    trees = [make_stump_tree(0, 0.5, (0.8, 0.2), (0.2, 0.8))
             for _ in range(4)]
    model = Forest(trees=trees, n_features=1, n_classes=2,
                   task="classification")
    X = rng.uniform(0, 1, size=(200, 1))
    X = np.where(np.abs(X - 0.5) < 0.01, 0.25, X)  # keep clear of the split
    y = (X[:, 0] > 0.5).astype(float)
    table = accuracy_report(model, Dataset(X, y), QuantizationSpec(2 ** 15, 16))
    assert len(set(table.by_variant().values())) == 1


def test_accuracy_requires_classification(stump):
    with pytest.raises(ValueError, match="classification"):
        accuracy_report(stump, dataset_from([[0.1]]), QuantizationSpec(2, 16))


def test_accuracy_ties_break_toward_lower_class():
    tree = make_stump_tree(0, 0.5, (0.5, 0.5), (0.5, 0.5))
    model = Forest(trees=[tree], n_features=1, n_classes=2,
                   task="classification")
    X = np.array([[0.3], [0.7]])
    table = accuracy_report(model, Dataset(X, np.zeros(2)),
                            QuantizationSpec(2 ** 10, 16))
    assert table.rows[0].accuracy == 1.0  # every tie predicts class 0


# ---------------------------------------------------------------------------
# merge stats
# ---------------------------------------------------------------------------

def test_merge_stats_all_duplicates():
    forest = Forest(trees=[make_stump_tree(0, 0.5), make_stump_tree(0, 0.5)],
                    n_features=1)
    assert merge_stats(forest).float_fraction == 0.5


def test_merge_stats_all_distinct(rng):
    forest = random_forest(rng, n_trees=5, max_leaves=8, n_features=3,
                           threshold_grid=None)
    assert merge_stats(forest).float_fraction == 1.0


def test_merge_stats_k_fold(rng):
    base = random_forest(rng, n_trees=2, max_leaves=8, n_features=3,
                         threshold_grid=None)
    for k in (2, 4):
        stats = merge_stats(duplicated_forest(base, k))
        assert stats.float_fraction == pytest.approx(1.0 / k)
    assert "unique nodes" in merge_stats(base).to_text()


def test_merge_stats_quantized_not_higher(rng):
    forest = random_forest(rng, n_trees=10, max_leaves=16, n_features=4)
    q = quantize_forest(forest, QuantizationSpec(2 ** 15, 16))
    stats = merge_stats(forest, q)
    assert stats.quantized_fraction <= stats.float_fraction


def test_score_checksum_distinguishes_dtypes():
    a = np.array([[1.0, 2.0]])
    b = np.array([[1, 2]], dtype=np.int64)
    assert score_checksum(a) != score_checksum(b)
    assert score_checksum(a) == score_checksum(a.copy())
