"""Lane-parallel QuickScorer: v instances scored per triple scan.

The lane count follows a 128-bit SIMD register contract: 4 lanes for
models compared in 32-bit elements (float thresholds, or 32-bit quantized
ones), 8 lanes for 16-bit quantized thresholds. Per triple, all lanes are
compared against the broadcast threshold; the node bitmask is blended into
the bitvectors of triggering lanes, and the scan stops early once no lane
triggers (ascending thresholds make that sound for every lane).

A pure-Python scalar fallback with identical, bit-exact results ships
alongside the lane path; the test suite runs both.

Output layout for a batch is class-major across lanes:
s[0,0], s[1,0], ..., s[v-1,0], s[0,1], ... (lane index moves fastest).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .quickscorer import QSModel, coerce_instance, exit_leaf_index

RS_BATCH = 16  # byte lanes of a 128-bit register; used by rapidscorer


def lane_width(model: QSModel) -> int:
    """Instances per batch: 4 for 32-bit comparisons, 8 for 16-bit ones."""
    spec = model.quantization
    if spec is not None and spec.splits and spec.width == 16:
        return 8
    return 4


def widen_lane_mask(lane_masks, n_leaves: int) -> np.ndarray:
    """Widen 16-bit all-ones/all-zeros lane masks to bitvector-size masks.

    Models quantized to 16 bits compare eight lanes at once, but the blend
    masks must match the leaf-bitvector width (32 or 64 bits here; other
    widths fall back to a scalar per-lane blend at the call site).
    """
    lanes = np.asarray(lane_masks, dtype=np.uint16)
    if n_leaves == 32:
        dtype = np.uint32
    elif n_leaves == 64:
        dtype = np.uint64
    else:
        raise ValueError(
            f"no widened path for L={n_leaves}; use a scalar per-lane blend")
    full = np.iinfo(dtype).max
    bad = (lanes != 0) & (lanes != 0xFFFF)
    if bad.any():
        raise ValueError("lane masks must be all-ones or all-zeros per lane")
    return np.where(lanes == 0xFFFF, dtype(full), dtype(0))


@njit(cache=True, nogil=True)
def _vqs_kernel(feat_start, gammas, tree_of, slot_of, masks, init_masks,
                X, trigger_ge, L, C, leafvalues, out, leaves):
    v = X.shape[0]
    M = init_masks.shape[0]
    leafidx = np.empty((M, v), dtype=np.uint64)
    for h in range(M):
        for i in range(v):
            leafidx[h, i] = init_masks[h]
    lane = np.empty(v, dtype=np.bool_)
    d = feat_start.shape[0] - 1
    for k in range(d):
        for t in range(feat_start[k], feat_start[k + 1]):
            g = gammas[t]
            any_trig = False
            for i in range(v):
                trig = X[i, k] > g or (trigger_ge and X[i, k] == g)
                lane[i] = trig
                any_trig = any_trig or trig
            if not any_trig:
                break
            h = tree_of[t]
            m = masks[slot_of[t]]
            for i in range(v):
                if lane[i]:
                    leafidx[h, i] = leafidx[h, i] & m
    for h in range(M):
        for i in range(v):
            b = leafidx[h, i]
            low = b & (np.uint64(0) - b)
            j = np.int64(math.log2(np.float64(low)))
            leaves[i, h] = j
            base = (h * L + j) * C
            for c in range(C):
                out[c * v + i] += leafvalues[base + c]


def _coerce_batch(model: QSModel, X, expected: int) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != expected:
        raise ValueError(
            f"batch must have exactly {expected} instances, got shape {X.shape}")
    rows = [coerce_instance(model, row) for row in X]
    return np.stack(rows)


def vqs_score_batch_with_leaves(model: QSModel, X):
    """(flat class-major scores of length v*C, exit leaves (v, M))."""
    v = lane_width(model)
    Xa = _coerce_batch(model, X, v)
    out_dtype = np.float64 if model.leafvalues.dtype == np.float64 else np.int64
    out = np.zeros(model.n_classes * v, dtype=out_dtype)
    leaves = np.empty((v, model.n_trees), dtype=np.int64)
    if model.single_word:
        _vqs_kernel(model.feat_start, model.gammas, model.tree_of, model.slot_of,
                    model.masks, model.init_masks, Xa, model.trigger_ge,
                    model.n_leaves, model.n_classes, model.leafvalues, out, leaves)
        return out, leaves
    return _vqs_scalar(model, Xa, out, leaves)


def vqs_score_batch(model: QSModel, X) -> np.ndarray:
    """Lane-parallel scores for one batch of exactly lane_width instances."""
    return vqs_score_batch_with_leaves(model, X)[0]


def _vqs_scalar(model: QSModel, Xa, out, leaves):
    v = Xa.shape[0]
    ge = model.trigger_ge
    feat_start = model.feat_start
    for i in range(v):
        leafidx = model.init_ints()
        x = Xa[i]
        for k in range(model.n_features):
            xk = x[k]
            for t in range(int(feat_start[k]), int(feat_start[k + 1])):
                g = model.gammas[t]
                if xk > g or (ge and xk == g):
                    leafidx[int(model.tree_of[t])] &= model.mask_int(int(model.slot_of[t]))
                else:
                    break
        for h in range(model.n_trees):
            j = exit_leaf_index(leafidx[h])
            leaves[i, h] = j
            base = (h * model.n_leaves + j) * model.n_classes
            for c in range(model.n_classes):
                out[c * v + i] += model.leafvalues[base + c]
    return out, leaves


def vqs_score_batch_scalar(model: QSModel, X) -> np.ndarray:
    """Mandatory scalar fallback; bit-identical to vqs_score_batch."""
    return vqs_score_batch_scalar_with_leaves(model, X)[0]


def vqs_score_batch_scalar_with_leaves(model: QSModel, X):
    v = lane_width(model)
    Xa = _coerce_batch(model, X, v)
    out_dtype = np.float64 if model.leafvalues.dtype == np.float64 else np.int64
    out = np.zeros(model.n_classes * v, dtype=out_dtype)
    leaves = np.empty((v, model.n_trees), dtype=np.int64)
    return _vqs_scalar(model, Xa, out, leaves)


def deinterleave(flat: np.ndarray, v: int, n_classes: int) -> np.ndarray:
    """Class-major lane output -> per-instance rows of shape (v, C)."""
    flat = np.asarray(flat)
    if flat.shape != (v * n_classes,):
        raise ValueError(f"expected flat length {v * n_classes}, got {flat.shape}")
    return flat.reshape(n_classes, v).T.copy()
