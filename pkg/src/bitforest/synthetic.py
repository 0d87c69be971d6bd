"""Seeded random forests and instance matrices for tests and experiments.

Values are kept inside (-1, 1) so every generated model also quantizes
cleanly to int16 at scale 2^15.
"""

from __future__ import annotations

import numpy as np

from .forest import LEQ, Forest, Node, Tree


def random_tree(rng: np.random.Generator, n_features: int, max_leaves: int,
                n_classes: int = 1, exact_leaves: bool = False,
                threshold_lo: float = 0.02, threshold_hi: float = 0.98,
                value_lo: float = -0.9, value_hi: float = 0.9,
                threshold_grid: int | None = 4096) -> Tree:
    """Grow a random binary tree by splitting random leaves.

    By default thresholds come from a fine shared grid, drawn without
    replacement within the tree: a single tree never repeats a (feature,
    threshold) pair, but trees collide with each other now and then, which
    gives node merging something to do. threshold_grid=None draws
    continuous uniforms instead (collisions essentially impossible).
    """
    n_leaves = max_leaves if exact_leaves else int(rng.integers(2, max_leaves + 1))
    if threshold_grid is None:
        thresholds = rng.uniform(threshold_lo, threshold_hi, size=n_leaves - 1)
    else:
        grid = np.linspace(threshold_lo, threshold_hi, threshold_grid)
        thresholds = rng.choice(grid, size=n_leaves - 1, replace=False)

    def leaf() -> list:
        vals = tuple(float(v) for v in rng.uniform(value_lo, value_hi, n_classes))
        return ["leaf", vals]

    root = leaf()
    leaves = [root]
    for i in range(n_leaves - 1):
        victim = leaves.pop(int(rng.integers(len(leaves))))
        lft, rgt = leaf(), leaf()
        victim[0] = "split"
        victim[1] = (int(rng.integers(n_features)), float(thresholds[i]), lft, rgt)
        leaves.extend((lft, rgt))

    nodes: list[Node] = []

    def emit(cell) -> int:
        idx = len(nodes)
        nodes.append(Node())  # placeholder
        if cell[0] == "leaf":
            nodes[idx] = Node(values=cell[1])
        else:
            k, g, lft, rgt = cell[1]
            li = emit(lft)
            ri = emit(rgt)
            nodes[idx] = Node(feature=k, threshold=g, left=li, right=ri)
        return idx

    emit(root)
    return Tree(nodes=nodes, root=0)


def random_forest(rng: np.random.Generator, n_trees: int, max_leaves: int,
                  n_features: int, n_classes: int = 1, comparison: str = LEQ,
                  exact_leaves: bool = False, **tree_kwargs) -> Forest:
    trees = [random_tree(rng, n_features, max_leaves, n_classes,
                         exact_leaves=exact_leaves, **tree_kwargs)
             for _ in range(n_trees)]
    return Forest(trees=trees, n_features=n_features, n_classes=n_classes,
                  comparison=comparison,
                  task="ranking" if n_classes == 1 else "classification")


def random_instances(rng: np.random.Generator, n: int, n_features: int,
                     lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    return rng.uniform(lo, hi, size=(n, n_features))


def duplicated_forest(forest: Forest, k: int) -> Forest:
    """The same trees repeated k times (unique-node fraction becomes 1/k)."""
    return Forest(trees=list(forest.trees) * k, n_features=forest.n_features,
                  n_classes=forest.n_classes, comparison=forest.comparison,
                  task=forest.task)


def ranking_model(rng: np.random.Generator, n_trees: int = 1000,
                  max_leaves: int = 32, n_features: int = 20) -> Forest:
    """A gradient-boosting-shaped ranking ensemble at a chosen scale."""
    return random_forest(rng, n_trees, max_leaves, n_features, n_classes=1,
                         exact_leaves=True)
