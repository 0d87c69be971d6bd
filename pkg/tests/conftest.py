import json
from pathlib import Path

import numpy as np
import pytest

from bitforest.forest import Forest, Node, Tree, parse_forest

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def stump_doc(threshold=0.5, leaves=((1.0,), (2.0,)), comparison="leq", **over):
    doc = {
        "n_features": 1, "n_classes": len(leaves[0]), "comparison": comparison,
        "task": "ranking" if len(leaves[0]) == 1 else "classification",
        "weights": None,
        "trees": [{"nodes": [
            {"id": 0, "feature": 0, "threshold": threshold, "left": 1, "right": 2},
            {"id": 1, "leaf": list(leaves[0])},
            {"id": 2, "leaf": list(leaves[1])},
        ]}],
    }
    doc.update(over)
    return doc


def make_stump_tree(feature=0, threshold=0.5, left=(1.0,), right=(2.0,)) -> Tree:
    nodes = [Node(feature=feature, threshold=threshold, left=1, right=2),
             Node(values=tuple(left)), Node(values=tuple(right))]
    return Tree(nodes=nodes, root=0)


def make_stump(threshold=0.5, left=1.0, right=2.0, comparison="leq",
               n_features=1) -> Forest:
    return Forest(trees=[make_stump_tree(0, threshold, (left,), (right,))],
                  n_features=n_features, comparison=comparison)


def full_depth2_tree(feature=0) -> Tree:
    """Full depth-2 tree: root + 2 internal + 4 leaves (values 1..4)."""
    nodes = [
        Node(feature=feature, threshold=0.5, left=1, right=2),
        Node(feature=feature, threshold=0.25, left=3, right=4),
        Node(feature=feature, threshold=0.75, left=5, right=6),
        Node(values=(1.0,)), Node(values=(2.0,)),
        Node(values=(3.0,)), Node(values=(4.0,)),
    ]
    return Tree(nodes=nodes, root=0)


@pytest.fixture
def stump() -> Forest:
    return parse_forest(stump_doc())


@pytest.fixture(scope="session")
def depth3_fixture():
    doc = json.loads((FIXTURES / "depth3_forest.json").read_text())
    golden = json.loads((FIXTURES / "depth3_golden.json").read_text())
    return doc, golden


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(123456)
