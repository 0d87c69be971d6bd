"""Scalar QuickScorer: feature-ordered traversal over leaf bitvectors.

The model is compiled into per-feature lists of (threshold, tree, node-slot)
triples sorted by ascending threshold, one leaf bitmask per internal node,
and one contiguous leaf-value table. Scoring initializes a per-tree leaf
bitvector to all ones, ANDs in the bitmask of every triggered false node
(x[k] > threshold for LEQ models, >= for LT models, stopping at the first
non-trigger thanks to the ascending order), and reads the exit leaf off the
lowest surviving bit.

Bit order convention (shared package-wide): leaf j lives at bit j, i.e. in
byte j // 8 at in-byte position j % 8, least significant first. "Leftmost
set bit" in the traversal sense is therefore the lowest set bit. Trees with
up to 64 leaves use one 64-bit word; 65..256 leaves use arbitrary-precision
integers on a pure-Python path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .forest import LT, ModelError, Tree
from .quantize import WIDTH_DTYPES, QuantizationSpec, unwrap

MAX_SINGLE_WORD = 64


def leaf_spans(tree: Tree) -> list[tuple[int, int]]:
    """Per node, the half-open range of leaf indices under it (post-order)."""
    span: list[tuple[int, int]] = [(0, 0)] * len(tree.nodes)
    stack: list[tuple[int, bool]] = [(tree.root, False)]
    while stack:
        idx, processed = stack.pop()
        nd = tree.nodes[idx]
        if nd.is_leaf:
            span[idx] = (nd.leaf_index, nd.leaf_index + 1)
        elif processed:
            span[idx] = (span[nd.left][0], span[nd.right][1])
        else:
            stack.append((idx, True))
            stack.append((nd.right, False))
            stack.append((nd.left, False))
    return span


def build_bitmask(tree: Tree, node: int, spans=None) -> int:
    """Leaf bitmask of an internal node: zeros over its left subtree.

    The mask is ANDed into a tree's leaf bitvector when the node tests
    false (instance goes right), which makes exactly the left subtree's
    leaves unreachable. Bits at and above the tree's leaf count are zero.
    """
    nd = tree.nodes[node]
    if nd.is_leaf:
        raise ValueError(f"node {node} is a leaf, bitmasks exist for internal nodes only")
    if spans is None:
        spans = leaf_spans(tree)
    lo, hi = spans[nd.left]
    if not (0 <= lo < hi <= tree.n_leaves):
        raise RuntimeError(f"leaf span [{lo}, {hi}) out of range for L={tree.n_leaves}")
    full = (1 << tree.n_leaves) - 1
    return full & ~(((1 << (hi - lo)) - 1) << lo)


def exit_leaf_index(bits: int) -> int:
    """Lowest set bit index of a leaf bitvector ("leftmost" in byte order)."""
    if bits <= 0:
        raise RuntimeError("leaf bitvector has no set bit (traversal invariant broken)")
    return (bits & -bits).bit_length() - 1


@dataclass
class QSModel:
    """Flattened QuickScorer arrays. Immutable after build; scoring
    allocates per-call scratch, so concurrent calls on one model are safe."""

    n_features: int
    n_trees: int
    n_classes: int
    n_leaves: int               # model-wide max L
    comparison: str
    quantization: QuantizationSpec | None
    feat_start: np.ndarray      # int64[d+1]: triple range per feature
    gammas: np.ndarray          # thresholds, ascending within each feature
    tree_of: np.ndarray         # int32[T]
    slot_of: np.ndarray         # int32[T]: bitmask slot per triple
    slot_tree: np.ndarray       # int32[S]: owning tree per slot
    slot_node: np.ndarray       # int32[S]: node index per slot
    tree_leaves: np.ndarray     # int32[M]: per-tree leaf count
    leafvalues: np.ndarray      # ((M*L*C),) zero-filled where a tree has < L leaves
    masks: np.ndarray | None    # uint64[S] when L <= 64
    init_masks: np.ndarray | None
    masks_big: list | None      # python ints when 64 < L <= 256
    init_big: list | None

    @property
    def single_word(self) -> bool:
        return self.masks is not None

    @property
    def trigger_ge(self) -> bool:
        # LEQ models trigger a false node on x > gamma, LT models on x >= gamma.
        return self.comparison == LT

    @property
    def n_triples(self) -> int:
        return len(self.gammas)

    def mask_int(self, slot: int) -> int:
        return int(self.masks[slot]) if self.single_word else self.masks_big[slot]

    def init_ints(self) -> list[int]:
        if self.single_word:
            return [int(v) for v in self.init_masks]
        return list(self.init_big)

    def value(self, tree: int, leaf: int, cls: int):
        v = self.leafvalues[(tree * self.n_leaves + leaf) * self.n_classes + cls]
        return v.item()


def build_qs_model(model) -> QSModel:
    """Compile a Forest or QuantizedForest into QuickScorer form."""
    forest, spec = unwrap(model)
    L = forest.max_leaves
    if L > 256:
        raise ModelError(f"trees with more than 256 leaves are unsupported (got {L})")
    d = forest.n_features
    M = forest.n_trees
    C = forest.n_classes

    split_dtype = WIDTH_DTYPES[spec.width] if spec is not None and spec.splits else np.float64
    value_dtype = WIDTH_DTYPES[spec.width] if spec is not None and spec.leaves else np.float64

    triples: list[list[tuple]] = [[] for _ in range(d)]
    mask_ints: list[int] = []
    slot_tree: list[int] = []
    slot_node: list[int] = []
    tree_leaves = np.zeros(M, dtype=np.int32)
    leafvalues = np.zeros(M * L * C, dtype=value_dtype)

    for h, tree in enumerate(forest.trees):
        tree_leaves[h] = tree.n_leaves
        spans = leaf_spans(tree)
        for ni, nd in enumerate(tree.nodes):
            if nd.is_leaf:
                base = (h * L + nd.leaf_index) * C
                for c, v in enumerate(nd.values):
                    leafvalues[base + c] = v
            else:
                slot = len(mask_ints)
                mask_ints.append(build_bitmask(tree, ni, spans))
                slot_tree.append(h)
                slot_node.append(ni)
                triples[nd.feature].append((nd.threshold, h, slot))

    feat_start = np.zeros(d + 1, dtype=np.int64)
    gam: list = []
    tr: list[int] = []
    sl: list[int] = []
    for k in range(d):
        triples[k].sort()  # threshold ascending, ties by (tree, slot)
        feat_start[k + 1] = feat_start[k] + len(triples[k])
        for g, h, slot in triples[k]:
            gam.append(g)
            tr.append(h)
            sl.append(slot)

    single = L <= MAX_SINGLE_WORD
    masks = np.array(mask_ints, dtype=np.uint64) if single else None
    init = np.array([(1 << int(n)) - 1 for n in tree_leaves], dtype=np.uint64) \
        if single else None
    return QSModel(
        n_features=d, n_trees=M, n_classes=C, n_leaves=L,
        comparison=forest.comparison, quantization=spec,
        feat_start=feat_start,
        gammas=np.array(gam, dtype=split_dtype),
        tree_of=np.array(tr, dtype=np.int32),
        slot_of=np.array(sl, dtype=np.int32),
        slot_tree=np.array(slot_tree, dtype=np.int32),
        slot_node=np.array(slot_node, dtype=np.int32),
        tree_leaves=tree_leaves,
        leafvalues=leafvalues,
        masks=masks, init_masks=init,
        masks_big=None if single else mask_ints,
        init_big=None if single else [(1 << int(n)) - 1 for n in tree_leaves],
    )


def coerce_instance(model: QSModel, x) -> np.ndarray:
    """Validate and convert one instance to the model's comparison dtype."""
    arr = np.asarray(x)
    if arr.shape != (model.n_features,):
        raise ValueError(
            f"instance has shape {arr.shape}, model expects ({model.n_features},)")
    if model.gammas.dtype == np.float64:
        arr = arr.astype(np.float64, copy=False)
        if not np.isfinite(arr).all():
            j = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise ValueError(f"feature {j} is not finite: {arr[j]!r}")
        return arr
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(
            "model has quantized splits; pass an instance pre-quantized with "
            "the same scale (see quantize_instance)")
    return arr.astype(model.gammas.dtype, copy=False)


@njit(cache=True, nogil=True)
def _qs_kernel(feat_start, gammas, tree_of, slot_of, masks, init_masks,
               x, trigger_ge, L, C, leafvalues, out, leaves):
    M = init_masks.shape[0]
    leafidx = init_masks.copy()
    d = feat_start.shape[0] - 1
    for k in range(d):
        xk = x[k]
        for t in range(feat_start[k], feat_start[k + 1]):
            g = gammas[t]
            if xk > g or (trigger_ge and xk == g):
                leafidx[tree_of[t]] &= masks[slot_of[t]]
            else:
                break
    for h in range(M):
        v = leafidx[h]
        low = v & (np.uint64(0) - v)
        j = np.int64(math.log2(np.float64(low)))
        leaves[h] = j
        base = (h * L + j) * C
        for c in range(C):
            out[c] += leafvalues[base + c]


def qs_score_with_leaves(model: QSModel, x) -> tuple[np.ndarray, np.ndarray]:
    """(class scores, per-tree exit leaves) for one instance."""
    xa = coerce_instance(model, x)
    out_dtype = np.float64 if model.leafvalues.dtype == np.float64 else np.int64
    out = np.zeros(model.n_classes, dtype=out_dtype)
    leaves = np.empty(model.n_trees, dtype=np.int64)
    if model.single_word:
        _qs_kernel(model.feat_start, model.gammas, model.tree_of, model.slot_of,
                   model.masks, model.init_masks, xa, model.trigger_ge,
                   model.n_leaves, model.n_classes, model.leafvalues, out, leaves)
        return out, leaves
    scores, leaf_list = qs_score_python(model, xa)
    out[:] = scores
    leaves[:] = leaf_list
    return out, leaves


def qs_score(model: QSModel, x) -> np.ndarray:
    """QuickScorer class scores for one instance."""
    return qs_score_with_leaves(model, x)[0]


def qs_score_python(model: QSModel, x, *, no_break: bool = False,
                    trace=None) -> tuple[list, list[int]]:
    """Pure-Python reference path (also the 65..256-leaf implementation).

    With no_break=True the ascending-threshold early exit is disabled; the
    result must be identical (break-safety property). `trace`, if a list,
    receives the leaf bitvectors after mask computation.
    """
    leafidx = model.init_ints()
    ge = model.trigger_ge
    feat_start = model.feat_start
    for k in range(model.n_features):
        xk = x[k]
        for t in range(int(feat_start[k]), int(feat_start[k + 1])):
            g = model.gammas[t]
            if xk > g or (ge and xk == g):
                h = int(model.tree_of[t])
                leafidx[h] &= model.mask_int(int(model.slot_of[t]))
            elif not no_break:
                break
    if trace is not None:
        trace.extend(leafidx)
    leaves = [exit_leaf_index(v) for v in leafidx]
    int_values = model.leafvalues.dtype != np.float64
    acc = [0] * model.n_classes if int_values else [0.0] * model.n_classes
    for h, j in enumerate(leaves):
        base = (h * model.n_leaves + j) * model.n_classes
        for c in range(model.n_classes):
            acc[c] = acc[c] + model.leafvalues[base + c].item()
    return acc, leaves
