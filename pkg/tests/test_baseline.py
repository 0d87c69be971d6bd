import numpy as np
import pytest

from bitforest.baseline import (build_ie, build_native, ie_score,
                                ie_score_with_leaves, na_score,
                                na_score_with_leaves)
from bitforest.forest import naive_score_with_leaves
from bitforest.quantize import QuantizationSpec, quantize_forest, quantize_instances
from bitforest.synthetic import random_forest, random_instances



def test_native_stump_has_three_records(stump):
    layout = build_native(stump)
    assert layout.feature.shape[0] == 3
    assert int(layout.is_leaf.sum()) == 2


def test_native_layout_has_exactly_L_leaf_records_per_tree(rng):
    forest = random_forest(rng, n_trees=5, max_leaves=24, n_features=4)
    layout = build_native(forest)
    for h, tree in enumerate(forest.trees):
        lo, hi = layout.tree_start[h], layout.tree_start[h + 1]
        assert int(layout.is_leaf[lo:hi].sum()) == tree.n_leaves


def test_ie_stump(stump):
    assert list(ie_score(stump, [0.3])) == [1.0]


def test_baselines_match_naive_on_large_forest(rng):
    # 1000 trees, 1000 random inputs: IE and NA reproduce the oracle
    forest = random_forest(rng, n_trees=1000, max_leaves=16, n_features=8)
    layout = build_native(forest)
    ie = build_ie(forest)
    X = random_instances(rng, 1000, 8)
    for x in X:
        ref_scores, ref_leaves = naive_score_with_leaves(forest, x)
        ie_s, ie_l = ie_score_with_leaves(ie, x)
        na_s, na_l = na_score_with_leaves(layout, x)
        assert list(ie_l) == ref_leaves and list(na_l) == ref_leaves
        assert np.allclose(ie_s, ref_scores, rtol=1e-6, atol=0)
        assert np.allclose(na_s, ref_scores, rtol=1e-6, atol=0)


def test_native_scores_match_oracle_on_fixture(rng):
    forest = random_forest(rng, n_trees=20, max_leaves=32, n_features=6,
                           n_classes=3)
    layout = build_native(forest)
    for x in random_instances(rng, 100, 6):
        ref, _ = naive_score_with_leaves(forest, x)
        assert np.allclose(na_score(layout, x), ref, rtol=1e-6, atol=0)


def test_quantized_baselines_bit_identical(rng):
    forest = random_forest(rng, n_trees=12, max_leaves=16, n_features=5,
                           n_classes=2)
    spec = QuantizationSpec(2 ** 15, 16)
    q = quantize_forest(forest, spec)
    layout = build_native(q)
    ie = build_ie(q)
    assert layout.threshold.dtype == np.int16
    X = quantize_instances(random_instances(rng, 100, 5), spec.scale, spec.width)
    for x in X:
        ref, leaves = naive_score_with_leaves(q, x)
        ie_s, ie_l = ie_score_with_leaves(ie, x)
        na_s, na_l = na_score_with_leaves(layout, x)
        assert list(ie_s) == ref and list(na_s) == ref  # integer, exact
        assert list(ie_l) == leaves and list(na_l) == leaves


def test_baseline_input_errors(stump):
    layout = build_native(stump)
    with pytest.raises(ValueError, match="finite"):
        na_score(layout, [float("nan")])
    with pytest.raises(ValueError, match="finite"):
        ie_score(stump, [float("inf")])
    with pytest.raises(ValueError, match="shape"):
        na_score(layout, [0.1, 0.2])
