"""Canonical in-memory tree-ensemble model.

Holds the exchange-format (JSON) reader/writer, structural validation,
weight folding, and the brute-force reference scorers that every other
implementation in this package is checked against.

Leaf numbering convention (shared by all scorers): leaves are numbered
0..L-1 in left-to-right order, i.e. by in-order position. This fixes the
bit order of every leaf bitvector downstream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

LEQ = "leq"  # left child taken when x[k] <= threshold (scikit-learn convention)
LT = "lt"    # left child taken when x[k] <  threshold (XGBoost convention)

MAX_LEAVES = 256


class ModelError(Exception):
    """Base class for model construction/usage errors."""


class ParseError(ModelError):
    """Exchange document is malformed (bad JSON, missing field, bad reference)."""


class ValidationError(ModelError):
    """Parsed document violates a structural invariant."""


@dataclass(frozen=True)
class Node:
    """One tree node.

    Internal nodes carry (feature, threshold, left, right); leaves carry
    `values` (one entry per class) and their left-to-right `leaf_index`.
    `left`/`right` are indices into the owning tree's node list.
    """

    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    values: tuple[float, ...] | None = None
    leaf_index: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.values is not None


@dataclass
class Tree:
    """A rooted binary tree. Immutable after construction by convention."""

    nodes: list[Node]
    root: int = 0
    n_leaves: int = 0

    def __post_init__(self) -> None:
        if self.n_leaves == 0 and self.nodes:
            self.nodes, self.n_leaves = assign_leaf_indices(self.nodes, self.root)

    def leaf_values(self) -> list[tuple[float, ...]]:
        """Leaf value tuples ordered by leaf_index."""
        out: list[tuple[float, ...] | None] = [None] * self.n_leaves
        for nd in self.nodes:
            if nd.is_leaf:
                out[nd.leaf_index] = nd.values
        return out  # type: ignore[return-value]


@dataclass
class Forest:
    """Pre-trained additive ensemble of binary decision trees.

    `comparison` decides the split test: LEQ sends x[k] <= threshold left,
    LT sends x[k] < threshold left. Immutable after construction; safe for
    concurrent readers.
    """

    trees: list[Tree]
    n_features: int
    n_classes: int = 1
    comparison: str = LEQ
    task: str = "ranking"

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def max_leaves(self) -> int:
        return max(t.n_leaves for t in self.trees)


@dataclass(frozen=True)
class Issue:
    severity: str  # "error" or "warning"
    message: str
    tree: int | None = None
    node: int | None = None


@dataclass
class ValidationReport:
    issues: list[Issue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(i.severity == "error" for i in self.issues)

    def errors(self) -> list[Issue]:
        return [i for i in self.issues if i.severity == "error"]


def assign_leaf_indices(nodes: list[Node], root: int) -> tuple[list[Node], int]:
    """Number leaves 0..L-1 in left-to-right order (iterative, left first)."""
    out = list(nodes)
    count = 0
    stack = [root]
    while stack:
        idx = stack.pop()
        nd = out[idx]
        if nd.is_leaf:
            out[idx] = replace(nd, leaf_index=count)
            count += 1
        else:
            stack.append(nd.right)
            stack.append(nd.left)
    return out, count


# ---------------------------------------------------------------------------
# Exchange format
# ---------------------------------------------------------------------------

def parse_forest(document: str | dict) -> "Forest":
    """Parse an exchange-format model document.

    Structural problems raise ParseError (with a location where possible);
    invariant violations raise ValidationError. A non-null "weights" field
    is folded into the leaf values, so the returned Forest always scores as
    an unweighted sum. Quantized documents are handled by
    `bitforest.quantize.parse_model`.
    """
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    else:
        doc = document
    if not isinstance(doc, dict):
        raise ParseError("top-level value must be an object")

    for key in ("n_features", "n_classes", "comparison", "task", "trees"):
        if key not in doc:
            raise ParseError(f"missing top-level field {key!r}")
    n_features = int(doc["n_features"])
    n_classes = int(doc["n_classes"])
    comparison = doc["comparison"]
    task = doc["task"]
    if comparison not in (LEQ, LT):
        raise ParseError(f"comparison must be 'leq' or 'lt', got {comparison!r}")
    if task not in ("ranking", "classification"):
        raise ParseError(f"task must be 'ranking' or 'classification', got {task!r}")
    raw_trees = doc["trees"]
    if not isinstance(raw_trees, list) or not raw_trees:
        raise ParseError("'trees' must be a non-empty list")

    trees = [_parse_tree(t, ti) for ti, t in enumerate(raw_trees)]
    forest = Forest(trees=trees, n_features=n_features, n_classes=n_classes,
                    comparison=comparison, task=task)

    weights = doc.get("weights")
    if weights is not None:
        forest = fold_weights(forest, weights)

    report = validate(forest)
    if not report.ok:
        first = report.errors()[0]
        raise ValidationError(
            f"document violates model invariants: {first.message}"
            f" (tree {first.tree}, node {first.node})")
    return forest


def _parse_tree(raw: dict, tree_idx: int) -> Tree:
    where = f"tree {tree_idx}"
    if not isinstance(raw, dict) or "nodes" not in raw:
        raise ParseError(f"{where}: tree object must carry a 'nodes' list")
    raw_nodes = raw["nodes"]
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise ParseError(f"{where}: 'nodes' must be a non-empty list")

    by_id: dict[int, dict] = {}
    for pos, nd in enumerate(raw_nodes):
        if "id" not in nd:
            raise ParseError(f"{where}, node at position {pos}: missing 'id'")
        nid = int(nd["id"])
        if nid in by_id:
            raise ParseError(f"{where}: duplicate node id {nid}")
        by_id[nid] = nd
    if 0 not in by_id:
        raise ParseError(f"{where}: root node (id 0) missing")

    # Walk from the root, checking references, acyclicity and connectivity.
    order: list[int] = []
    seen: set[int] = set()
    stack = [0]
    while stack:
        nid = stack.pop()
        if nid in seen:
            raise ParseError(f"{where}: cycle detected at node {nid}")
        seen.add(nid)
        order.append(nid)
        nd = by_id[nid]
        if "leaf" in nd:
            continue
        for key in ("feature", "threshold", "left", "right"):
            if key not in nd:
                raise ParseError(f"{where}, node {nid}: missing {key!r}")
        for key in ("left", "right"):
            child = int(nd[key])
            if child not in by_id:
                raise ParseError(f"{where}, node {nid}: child id {child} out of range")
        stack.append(int(nd["right"]))
        stack.append(int(nd["left"]))
    if len(seen) != len(by_id):
        orphan = sorted(set(by_id) - seen)[0]
        raise ParseError(f"{where}: node {orphan} unreachable from root")

    index_of = {nid: i for i, nid in enumerate(order)}
    nodes: list[Node] = []
    for nid in order:
        nd = by_id[nid]
        if "leaf" in nd:
            vals = nd["leaf"]
            if not isinstance(vals, list):
                raise ParseError(f"{where}, node {nid}: 'leaf' must be a list")
            nodes.append(Node(values=tuple(float(v) for v in vals)))
        else:
            nodes.append(Node(feature=int(nd["feature"]),
                              threshold=float(nd["threshold"]),
                              left=index_of[int(nd["left"])],
                              right=index_of[int(nd["right"])]))
    return Tree(nodes=nodes, root=0)


def serialize_forest(forest: Forest, *, quantization: dict | None = None) -> str:
    """Emit the exchange-format JSON document (weights already folded)."""
    trees = []
    for tree in forest.trees:
        raw_nodes = []
        # Emit nodes in preorder from the root with sequential ids.
        new_id = {}
        order = []
        stack = [tree.root]
        while stack:
            idx = stack.pop()
            new_id[idx] = len(order)
            order.append(idx)
            nd = tree.nodes[idx]
            if not nd.is_leaf:
                stack.append(nd.right)
                stack.append(nd.left)
        for idx in order:
            nd = tree.nodes[idx]
            if nd.is_leaf:
                raw_nodes.append({"id": new_id[idx], "leaf": list(nd.values)})
            else:
                raw_nodes.append({"id": new_id[idx], "feature": nd.feature,
                                  "threshold": nd.threshold,
                                  "left": new_id[nd.left], "right": new_id[nd.right]})
        trees.append({"nodes": raw_nodes})
    doc = {
        "n_features": forest.n_features,
        "n_classes": forest.n_classes,
        "comparison": forest.comparison,
        "task": forest.task,
        "weights": None,
        "trees": trees,
    }
    if quantization is not None:
        doc["quantization"] = quantization
    return json.dumps(doc)


def forests_equivalent(a: Forest, b: Forest) -> bool:
    """Structural equality, insensitive to node-list ordering."""
    if (a.n_features, a.n_classes, a.comparison, a.task) != \
            (b.n_features, b.n_classes, b.comparison, b.task):
        return False
    if a.n_trees != b.n_trees:
        return False
    for ta, tb in zip(a.trees, b.trees):
        stack = [(ta.root, tb.root)]
        while stack:
            ia, ib = stack.pop()
            na, nb = ta.nodes[ia], tb.nodes[ib]
            if na.is_leaf != nb.is_leaf:
                return False
            if na.is_leaf:
                if na.values != nb.values or na.leaf_index != nb.leaf_index:
                    return False
            else:
                if na.feature != nb.feature or na.threshold != nb.threshold:
                    return False
                stack.append((na.left, nb.left))
                stack.append((na.right, nb.right))
    return True


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def fold_weights(forest: Forest, weights) -> Forest:
    """Scale every leaf value of tree i by weights[i].

    After folding, plain summation over trees reproduces the weighted
    ensemble vote, so scorers never see weights.
    """
    weights = list(weights)
    if len(weights) != forest.n_trees:
        raise ValueError(
            f"got {len(weights)} weights for {forest.n_trees} trees")
    for i, w in enumerate(weights):
        if not math.isfinite(w):
            raise ValueError(f"weight {i} is not finite: {w!r}")
    trees = []
    for w, tree in zip(weights, forest.trees):
        nodes = [replace(nd, values=tuple(w * v for v in nd.values))
                 if nd.is_leaf else nd for nd in tree.nodes]
        trees.append(Tree(nodes=nodes, root=tree.root, n_leaves=tree.n_leaves))
    return Forest(trees=trees, n_features=forest.n_features,
                  n_classes=forest.n_classes, comparison=forest.comparison,
                  task=forest.task)


def validate(forest: Forest) -> ValidationReport:
    """Check every structural invariant; violations become report entries."""
    report = ValidationReport()
    err = lambda msg, tree=None, node=None: report.issues.append(
        Issue("error", msg, tree, node))

    if forest.n_trees < 1:
        err("forest must contain at least one tree")
        return report
    if forest.n_features < 1:
        err("n_features must be >= 1")
    if forest.n_classes < 1:
        err("n_classes must be >= 1")
    if forest.comparison not in (LEQ, LT):
        err(f"unknown comparison kind {forest.comparison!r}")

    for ti, tree in enumerate(forest.trees):
        n = len(tree.nodes)
        if not (0 <= tree.root < n):
            err("root index out of range", ti)
            continue
        seen: set[int] = set()
        stack = [tree.root]
        leaves = 0
        broken = False
        while stack:
            idx = stack.pop()
            if idx in seen:
                err("cycle detected", ti, idx)
                broken = True
                break
            seen.add(idx)
            nd = tree.nodes[idx]
            if nd.is_leaf:
                leaves += 1
                if len(nd.values) != forest.n_classes:
                    err(f"leaf carries {len(nd.values)} values, expected "
                        f"{forest.n_classes}", ti, idx)
                for v in nd.values:
                    if not math.isfinite(v):
                        err(f"leaf value not finite: {v!r}", ti, idx)
                        break
            else:
                if not (0 <= nd.feature < forest.n_features):
                    err(f"feature index {nd.feature} out of range", ti, idx)
                if not math.isfinite(nd.threshold):
                    err(f"threshold not finite: {nd.threshold!r}", ti, idx)
                for child in (nd.left, nd.right):
                    if not (0 <= child < n):
                        err(f"child index {child} out of range", ti, idx)
                        broken = True
                if broken:
                    break
                stack.append(nd.left)
                stack.append(nd.right)
        if broken:
            continue
        if len(seen) != n:
            err(f"{n - len(seen)} nodes unreachable from root", ti)
        if leaves > MAX_LEAVES:
            err(f"L exceeds {MAX_LEAVES} (got {leaves} leaves)", ti)
        if leaves != tree.n_leaves:
            err(f"n_leaves={tree.n_leaves} but {leaves} leaves reachable", ti)
        # Leaf indices must be 0..L-1 in left-to-right order.
        renumbered, _ = assign_leaf_indices(tree.nodes, tree.root)
        for idx, (orig, fresh) in enumerate(zip(tree.nodes, renumbered)):
            if orig.is_leaf and orig.leaf_index != fresh.leaf_index:
                err(f"leaf_index {orig.leaf_index} out of left-to-right order "
                    f"(expected {fresh.leaf_index})", ti, idx)
    return report


def _check_instance(x, n_features: int) -> None:
    if len(x) != n_features:
        raise ValueError(f"instance has {len(x)} features, model expects {n_features}")
    for j, v in enumerate(x):
        if not math.isfinite(v):
            raise ValueError(f"feature {j} is not finite: {v!r}")


def _descend(tree: Tree, x, leq: bool) -> Node:
    nd = tree.nodes[tree.root]
    while not nd.is_leaf:
        xv = x[nd.feature]
        go_left = xv <= nd.threshold if leq else xv < nd.threshold
        nd = tree.nodes[nd.left if go_left else nd.right]
    return nd


def naive_exit_leaf(tree: Tree, x, comparison: str = LEQ) -> int:
    """Index of the leaf reached by plain root-to-leaf descent."""
    for v in x:
        if not math.isfinite(v):
            raise ValueError(f"non-finite feature value: {v!r}")
    return _descend(tree, x, comparison == LEQ).leaf_index


def naive_score(forest, x) -> list:
    """Componentwise sum of exit-leaf values over trees, in tree order.

    This is the reference oracle. Works unchanged on quantized forests
    (integer thresholds/values against integer instances).
    """
    return naive_score_with_leaves(forest, x)[0]


def naive_score_with_leaves(forest, x) -> tuple[list, list[int]]:
    """(score vector, per-tree exit leaf indices) in one descent pass."""
    base = getattr(forest, "forest", forest)  # accept QuantizedForest
    _check_instance(x, base.n_features)
    leq = base.comparison == LEQ
    acc = [0] * base.n_classes if _is_integer_model(base) else [0.0] * base.n_classes
    leaves = []
    for tree in base.trees:
        nd = _descend(tree, x, leq)
        leaves.append(nd.leaf_index)
        vals = nd.values
        for c in range(base.n_classes):
            acc[c] = acc[c] + vals[c]
    return acc, leaves


def _is_integer_model(forest: Forest) -> bool:
    first = forest.trees[0]
    for nd in first.nodes:
        if nd.is_leaf:
            return isinstance(nd.values[0], int)
    return False
