import json

import pytest

from bitforest.forest import (LEQ, LT, Forest, Node, ParseError, Tree,
                              fold_weights,
                              forests_equivalent, naive_exit_leaf, naive_score,
                              naive_score_with_leaves, parse_forest,
                              serialize_forest, validate)
from bitforest.synthetic import random_forest, random_instances

from conftest import make_stump, make_stump_tree, stump_doc


def test_parse_smallest_legal_model():
    forest = parse_forest(json.dumps(stump_doc()))
    assert forest.n_trees == 1
    assert forest.max_leaves == 2
    assert forest.n_classes == 1
    assert validate(forest).ok


def test_parse_self_referencing_child_is_cycle_error():
    doc = stump_doc()
    doc["trees"][0]["nodes"][0]["left"] = 0
    with pytest.raises(ParseError, match="cycle"):
        parse_forest(doc)


def test_parse_bad_json_reports_location():
    with pytest.raises(ParseError, match="line"):
        parse_forest("{ not json }")


def test_parse_missing_field():
    doc = stump_doc()
    del doc["trees"][0]["nodes"][0]["threshold"]
    with pytest.raises(ParseError, match="threshold"):
        parse_forest(doc)


def test_parse_child_out_of_range():
    doc = stump_doc()
    doc["trees"][0]["nodes"][0]["right"] = 99
    with pytest.raises(ParseError, match="out of range"):
        parse_forest(doc)


def test_parse_unreachable_node():
    doc = stump_doc()
    doc["trees"][0]["nodes"].append({"id": 7, "leaf": [0.0]})
    with pytest.raises(ParseError, match="unreachable"):
        parse_forest(doc)


def test_depth3_fixture_matches_committed_goldens(depth3_fixture):
    doc, golden = depth3_fixture
    forest = parse_forest(doc)
    assert forest.n_trees == 8
    assert all(t.n_leaves == 8 for t in forest.trees)
    for case in golden:
        score, leaves = naive_score_with_leaves(forest, case["input"])
        assert leaves == case["exit_leaves"]
        assert score == pytest.approx(case["score"], rel=1e-12)


def test_fold_identity(stump):
    folded = fold_weights(stump, [1.0])
    assert forests_equivalent(stump, folded)


def test_fold_scalar_multiply(stump):
    folded = fold_weights(stump, [0.5])
    vals = sorted(v for t in folded.trees for nd in t.nodes
                  if nd.is_leaf for v in nd.values)
    assert vals == [0.5, 1.0]


def test_fold_random_forest_convention():
    # majority-vote weights 1/M: a unit leaf becomes 1/M
    trees = [make_stump_tree(left=(1.0,), right=(1.0,)) for _ in range(4)]
    forest = Forest(trees=trees, n_features=1)
    folded = fold_weights(forest, [1.0 / 4] * 4)
    for tree in folded.trees:
        for nd in tree.nodes:
            if nd.is_leaf:
                assert nd.values == (0.25,)


def test_fold_errors(stump):
    with pytest.raises(ValueError, match="weights"):
        fold_weights(stump, [1.0, 2.0])
    with pytest.raises(ValueError, match="finite"):
        fold_weights(stump, [float("inf")])


def test_fold_then_score_equals_weighted_sum(rng):
    forest = random_forest(rng, n_trees=6, max_leaves=16, n_features=4, n_classes=2)
    weights = [float(w) for w in rng.uniform(-1, 1, 6)]
    folded = fold_weights(forest, weights)
    for x in random_instances(rng, 20, 4):
        got = naive_score(folded, x)
        want = [0.0, 0.0]
        for w, tree in zip(weights, forest.trees):
            per_tree = naive_score(Forest([tree], 4, 2), x)
            for c in range(2):
                want[c] = want[c] + w * per_tree[c]
        # identical multiply-then-add order on both sides: exact equality
        assert got == want


def test_validate_ok(stump):
    report = validate(stump)
    assert report.ok and not report.issues


def test_validate_wrong_leaf_value_count():
    tree = make_stump_tree(left=(0.1,) * 9, right=(0.2,) * 10)
    forest = Forest(trees=[tree], n_features=1, n_classes=10,
                    task="classification")
    report = validate(forest)
    assert not report.ok
    issue = report.errors()[0]
    assert "9 values" in issue.message and issue.tree == 0 and issue.node is not None


def make_comb_tree(n_leaves: int) -> Tree:
    """Right-leaning comb: internal at 2i, its leaf child at 2i+1."""
    nodes = []
    for i in range(n_leaves - 1):
        nodes.append(Node(feature=0, threshold=float(i),
                          left=2 * i + 1, right=2 * i + 2))
        nodes.append(Node(values=(1.0,)))
    nodes.append(Node(values=(1.0,)))
    return Tree(nodes=nodes, root=0)


def test_validate_too_many_leaves():
    forest = Forest(trees=[make_comb_tree(257)], n_features=1)
    report = validate(forest)
    assert not report.ok
    assert any("L exceeds 256" in i.message for i in report.errors())


def test_validate_non_finite_threshold():
    tree = make_stump_tree(threshold=float("nan"))
    report = validate(Forest(trees=[tree], n_features=1))
    assert any("finite" in i.message for i in report.errors())


def test_naive_exit_leaf_boundary_leq_vs_lt(stump):
    tree = stump.trees[0]
    assert naive_exit_leaf(tree, [0.5], LEQ) == 0   # <= holds at the boundary
    assert naive_exit_leaf(tree, [0.5], LT) == 1    # < fails at the boundary


def test_naive_exit_leaf_rejects_non_finite(stump):
    with pytest.raises(ValueError, match="finite"):
        naive_exit_leaf(stump.trees[0], [float("nan")], LEQ)
    with pytest.raises(ValueError, match="finite"):
        naive_score(stump, [float("inf")])


def test_naive_score_stump(stump):
    assert naive_score(stump, [0.7]) == [2.0]
    assert naive_score(stump, [0.3]) == [1.0]


def test_naive_score_linearity():
    one = make_stump()
    two = Forest(trees=[make_stump_tree(), make_stump_tree()], n_features=1)
    for x in ([0.2], [0.8]):
        assert naive_score(two, x)[0] == 2 * naive_score(one, x)[0]


def test_descent_reaches_exactly_one_leaf(rng):
    # every input lands on exactly one valid leaf index
    for _ in range(10):
        forest = random_forest(rng, n_trees=3, max_leaves=30, n_features=5)
        for x in random_instances(rng, 50, 5):
            for tree in forest.trees:
                j = naive_exit_leaf(tree, x, forest.comparison)
                assert 0 <= j < tree.n_leaves


def test_serialize_parse_round_trip(rng):
    forest = random_forest(rng, n_trees=5, max_leaves=20, n_features=6,
                           n_classes=3)
    doc = serialize_forest(forest)
    again = parse_forest(doc)
    assert forests_equivalent(forest, again)
    # fixpoint: a second round trip emits the identical document
    assert serialize_forest(again) == doc


def test_leaf_indices_are_left_to_right(depth3_fixture):
    doc, _ = depth3_fixture
    forest = parse_forest(doc)
    for tree in forest.trees:
        # walking leftmost-first must meet leaf indices in increasing order
        seen = []
        stack = [tree.root]
        while stack:
            idx = stack.pop()
            nd = tree.nodes[idx]
            if nd.is_leaf:
                seen.append(nd.leaf_index)
            else:
                stack.append(nd.right)
                stack.append(nd.left)
        assert seen == list(range(tree.n_leaves))
