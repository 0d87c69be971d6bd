"""Comparison baselines: branching descent (IE) and flat-array traversal (NA).

IE mirrors a per-node if-else walk: each tree is a nest of small tuples
and descent chases references node by node. The historical baseline it
stands in for is compiled-out nested branches generated ahead of time;
this in-memory form keeps the artifact self-contained, and benchmark
reports flag it as a behavioral stand-in rather than codegen.

NA packs every tree into contiguous node records (array of structs) and
iterates over offsets, trading pointer chasing for data locality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .forest import LEQ
from .quantize import WIDTH_DTYPES, unwrap


@dataclass
class NativeLayout:
    """Contiguous per-tree node records plus the flat leaf-value table."""

    feature: np.ndarray     # int32[N]
    threshold: np.ndarray   # float64 | int16 | int32 [N]
    left: np.ndarray        # int32[N], global record offsets
    right: np.ndarray       # int32[N]
    is_leaf: np.ndarray     # uint8[N]
    leaf_slot: np.ndarray   # int32[N], leaf index j for leaf records
    tree_root: np.ndarray   # int64[M]
    tree_start: np.ndarray  # int64[M+1]
    leafvalues: np.ndarray  # ((M*L*C),)
    n_leaves: int           # model-wide max L
    n_classes: int
    n_features: int
    comparison: str
    quantization: object | None

    @property
    def n_trees(self) -> int:
        return len(self.tree_root)

    @property
    def trigger_ge(self) -> bool:
        return self.comparison != LEQ


def build_native(model) -> NativeLayout:
    """Flatten a Forest or QuantizedForest into the contiguous layout."""
    forest, spec = unwrap(model)
    L = forest.max_leaves
    M = forest.n_trees
    C = forest.n_classes
    split_dtype = WIDTH_DTYPES[spec.width] if spec is not None and spec.splits else np.float64
    value_dtype = WIDTH_DTYPES[spec.width] if spec is not None and spec.leaves else np.float64

    total = sum(len(t.nodes) for t in forest.trees)
    feature = np.zeros(total, dtype=np.int32)
    threshold = np.zeros(total, dtype=split_dtype)
    left = np.zeros(total, dtype=np.int32)
    right = np.zeros(total, dtype=np.int32)
    is_leaf = np.zeros(total, dtype=np.uint8)
    leaf_slot = np.zeros(total, dtype=np.int32)
    tree_root = np.zeros(M, dtype=np.int64)
    tree_start = np.zeros(M + 1, dtype=np.int64)
    leafvalues = np.zeros(M * L * C, dtype=value_dtype)

    base = 0
    for h, tree in enumerate(forest.trees):
        tree_start[h] = base
        tree_root[h] = base + tree.root
        for ni, nd in enumerate(tree.nodes):
            g = base + ni
            if nd.is_leaf:
                is_leaf[g] = 1
                leaf_slot[g] = nd.leaf_index
                vbase = (h * L + nd.leaf_index) * C
                for c, v in enumerate(nd.values):
                    leafvalues[vbase + c] = v
            else:
                feature[g] = nd.feature
                threshold[g] = nd.threshold
                left[g] = base + nd.left
                right[g] = base + nd.right
        base += len(tree.nodes)
    tree_start[M] = base
    return NativeLayout(feature=feature, threshold=threshold, left=left,
                        right=right, is_leaf=is_leaf, leaf_slot=leaf_slot,
                        tree_root=tree_root, tree_start=tree_start,
                        leafvalues=leafvalues, n_leaves=L, n_classes=C,
                        n_features=forest.n_features,
                        comparison=forest.comparison, quantization=spec)


@njit(cache=True, nogil=True)
def _na_kernel(feature, threshold, left, right, is_leaf, leaf_slot, tree_root,
               x, trigger_ge, L, C, leafvalues, out, leaves):
    M = tree_root.shape[0]
    for h in range(M):
        p = tree_root[h]
        while is_leaf[p] == 0:
            xv = x[feature[p]]
            g = threshold[p]
            if xv > g or (trigger_ge and xv == g):
                p = right[p]
            else:
                p = left[p]
        j = leaf_slot[p]
        leaves[h] = j
        base = (h * L + j) * C
        for c in range(C):
            out[c] += leafvalues[base + c]


def _coerce(layout: NativeLayout, x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.shape != (layout.n_features,):
        raise ValueError(
            f"instance has shape {arr.shape}, model expects ({layout.n_features},)")
    if layout.threshold.dtype == np.float64:
        arr = arr.astype(np.float64, copy=False)
        if not np.isfinite(arr).all():
            j = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise ValueError(f"feature {j} is not finite: {arr[j]!r}")
        return arr
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError("layout has quantized splits; pass a pre-quantized instance")
    return arr.astype(layout.threshold.dtype, copy=False)


def na_score_with_leaves(layout: NativeLayout, x):
    xa = _coerce(layout, x)
    out_dtype = np.float64 if layout.leafvalues.dtype == np.float64 else np.int64
    out = np.zeros(layout.n_classes, dtype=out_dtype)
    leaves = np.empty(layout.n_trees, dtype=np.int64)
    _na_kernel(layout.feature, layout.threshold, layout.left, layout.right,
               layout.is_leaf, layout.leaf_slot, layout.tree_root,
               xa, layout.trigger_ge, layout.n_leaves, layout.n_classes,
               layout.leafvalues, out, leaves)
    return out, leaves


def na_score(layout: NativeLayout, x) -> np.ndarray:
    """Flat-array traversal score for one instance."""
    return na_score_with_leaves(layout, x)[0]


class IEModel:
    """Per-tree nested tuples for branching descent.

    Internal nodes are (feature, threshold, left, right); leaves are
    (leaf_index, values). References are direct, so descent is a pure
    chain of branches.
    """

    __slots__ = ("roots", "leq", "n_classes", "n_features", "int_values",
                 "quantization")

    def __init__(self, model):
        forest, spec = unwrap(model)
        self.leq = forest.comparison == LEQ
        self.n_classes = forest.n_classes
        self.n_features = forest.n_features
        self.quantization = spec
        self.int_values = spec is not None and spec.leaves
        self.roots = []
        for tree in forest.trees:
            built: list = [None] * len(tree.nodes)
            order: list[int] = []
            stack = [tree.root]
            while stack:
                idx = stack.pop()
                order.append(idx)
                nd = tree.nodes[idx]
                if not nd.is_leaf:
                    stack.append(nd.left)
                    stack.append(nd.right)
            for idx in reversed(order):  # children before parents
                nd = tree.nodes[idx]
                if nd.is_leaf:
                    built[idx] = (nd.leaf_index, nd.values)
                else:
                    built[idx] = (nd.feature, nd.threshold,
                                  built[nd.left], built[nd.right])
            self.roots.append(built[tree.root])


def build_ie(model) -> IEModel:
    return IEModel(model)


def ie_score_with_leaves(model, x):
    ie = model if isinstance(model, IEModel) else IEModel(model)
    if len(x) != ie.n_features:
        raise ValueError(f"instance has {len(x)} features, model expects {ie.n_features}")
    for v in x:
        if not math.isfinite(v):
            raise ValueError(f"non-finite feature value: {v!r}")
    leq = ie.leq
    acc = [0] * ie.n_classes if ie.int_values else [0.0] * ie.n_classes
    leaves = np.empty(len(ie.roots), dtype=np.int64)
    for h, nd in enumerate(ie.roots):
        while len(nd) == 4:
            k, g, lft, rgt = nd
            nd = lft if (x[k] <= g if leq else x[k] < g) else rgt
        j, vals = nd
        leaves[h] = j
        for c in range(ie.n_classes):
            acc[c] = acc[c] + vals[c]
    out_dtype = np.int64 if ie.int_values else np.float64
    return np.array(acc, dtype=out_dtype), leaves


def ie_score(model, x) -> np.ndarray:
    """Branching-descent score for one instance (Forest, QuantizedForest,
    or a prebuilt IEModel)."""
    return ie_score_with_leaves(model, x)[0]
