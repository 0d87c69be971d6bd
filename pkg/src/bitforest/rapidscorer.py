"""RapidScorer: merged nodes, epitome bitmasks, byte-transposed bitvectors.

Three ideas on top of the lane-parallel scorer, applied to batches of 16
instances (the byte lanes of a 128-bit register):

* nodes sharing (feature, threshold) are merged so each unique threshold
  is compared once and its bitmask applied to every owning tree;
* each node's bitmask is stored as an epitome: only the byte run that
  differs from the all-ones pattern, plus its offset (left-subtree leaves
  are contiguous under the left-to-right numbering, so the run is one
  contiguous block with partial boundary bytes and 0x00 interiors);
* the 16 per-instance leaf bitvectors of a tree are stored byte-transposed
  (row m holds byte m of every instance), so an epitome application
  touches only its rows and the exit-leaf search walks rows top-down,
  taking the first nonzero byte and counting its trailing zeros (the
  reverse-then-count-leading-zeros formulation of the same thing).

Under 16-bit quantized thresholds the 16 lane comparisons need two
compare passes of a 128-bit register instead of the four float passes;
`compare_passes` records that. A bit-identical pure-Python scalar
fallback ships alongside the lane path.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .quickscorer import QSModel, exit_leaf_index
from .vqs import RS_BATCH, _coerce_batch

# trailing-zero count per byte value; index 0 is unused (kept at 8)
_CTZ8 = np.full(256, 8, dtype=np.int64)
for _b in range(1, 256):
    _CTZ8[_b] = (_b & -_b).bit_length() - 1


class Epitome:
    """Compressed bitmask: the byte run differing from all-ones + offset."""

    __slots__ = ("offset", "data")

    def __init__(self, offset: int, data: bytes):
        self.offset = offset
        self.data = bytes(data)

    def __eq__(self, other):
        return (isinstance(other, Epitome)
                and self.offset == other.offset and self.data == other.data)

    def __repr__(self):
        return f"Epitome(offset={self.offset}, data={self.data.hex()})"


def _init_pattern(n_leaves: int) -> bytes:
    """Byte image of the all-ones bitvector of a tree with n_leaves leaves."""
    n_bytes = (n_leaves + 7) // 8
    return ((1 << n_leaves) - 1).to_bytes(n_bytes, "little")


def encode_epitome(mask: int, n_leaves: int) -> Epitome:
    """Encode a node bitmask; raises on the all-ones mask (no node has one).

    The stored run spans the first through last byte that differ from the
    tree's all-ones pattern (0xFF everywhere except a possibly partial top
    byte). Expansion reproduces the mask byte-exactly.
    """
    n_bytes = (n_leaves + 7) // 8
    raw = mask.to_bytes(n_bytes, "little")
    ones = _init_pattern(n_leaves)
    diff = [i for i in range(n_bytes) if raw[i] != ones[i]]
    if not diff:
        raise ValueError("all-ones mask has no epitome (no internal node produces it)")
    lo, hi = diff[0], diff[-1] + 1
    return Epitome(lo, raw[lo:hi])


def expand_epitome(e: Epitome, n_leaves: int) -> int:
    """Inverse of encode_epitome (byte-exact)."""
    buf = bytearray(_init_pattern(n_leaves))
    buf[e.offset:e.offset + len(e.data)] = e.data
    return int.from_bytes(bytes(buf), "little")


def transpose_batch(bitvectors, n_leaves: int) -> np.ndarray:
    """16 leaf bitvectors -> (ceil(L/8), 16) uint8; row m = byte m of each."""
    if len(bitvectors) != RS_BATCH:
        raise ValueError(f"expected {RS_BATCH} bitvectors, got {len(bitvectors)}")
    n_rows = (n_leaves + 7) // 8
    t = np.empty((n_rows, RS_BATCH), dtype=np.uint8)
    for i, v in enumerate(bitvectors):
        t[:, i] = np.frombuffer(int(v).to_bytes(n_rows, "little"), dtype=np.uint8)
    return t


def untranspose_batch(t: np.ndarray) -> list[int]:
    """Columns of a transposed block back to 16 integers."""
    return [int.from_bytes(t[:, i].tobytes(), "little") for i in range(t.shape[1])]


def apply_epitome(e: Epitome, t: np.ndarray, lane_mask) -> None:
    """AND the expanded mask into the lanes selected by lane_mask, in place.

    Only rows [offset, offset+len) are touched; all other rows expand to
    all-ones and are AND-identity.
    """
    lanes = np.asarray(lane_mask, dtype=bool)
    if not lanes.any():
        return
    data = np.frombuffer(e.data, dtype=np.uint8)
    rows = t[e.offset:e.offset + len(data)]
    rows[:, lanes] &= data[:, None]


def find_leaf_index_batch(t: np.ndarray) -> np.ndarray:
    """Exit leaf per instance column of a transposed block.

    Per column: the first nonzero byte top-down sits at row c1; c2 counts
    that byte's trailing zeros; the leaf is c1*8 + c2. Matches
    exit_leaf_index on the un-transposed bitvector.
    """
    t = np.asarray(t, dtype=np.uint8)
    nz = t != 0
    present = nz.any(axis=0)
    if not present.all():
        bad = int(np.flatnonzero(~present)[0])
        raise RuntimeError(
            f"instance column {bad} has an all-zero bitvector (traversal invariant broken)")
    c1 = nz.argmax(axis=0)
    first = t[c1, np.arange(t.shape[1])]
    return c1 * 8 + _CTZ8[first]


class MergedTriple:
    """One unique (feature, threshold) with every (tree, slot) it controls."""

    __slots__ = ("feature", "threshold", "targets")

    def __init__(self, feature: int, threshold, targets):
        self.feature = feature
        self.threshold = threshold
        self.targets = list(targets)  # [(tree, slot), ...]

    def __repr__(self):
        return (f"MergedTriple(k={self.feature}, gamma={self.threshold}, "
                f"targets={self.targets})")


def merge_nodes(model: QSModel) -> list[list[MergedTriple]]:
    """Collapse triples sharing (feature, threshold) into merged triples.

    Per feature the thresholds come out strictly ascending; applying every
    target's mask when a merged triple triggers is semantically identical
    to the unmerged scan. Duplicates within a single tree are kept as two
    targets (both masks applied; always correct).
    """
    out: list[list[MergedTriple]] = []
    for k in range(model.n_features):
        lo, hi = int(model.feat_start[k]), int(model.feat_start[k + 1])
        merged: list[MergedTriple] = []
        for t in range(lo, hi):
            g = model.gammas[t].item()
            target = (int(model.tree_of[t]), int(model.slot_of[t]))
            if merged and merged[-1].threshold == g:
                merged[-1].targets.append(target)
            else:
                merged.append(MergedTriple(k, g, [target]))
        out.append(merged)
    return out


def unique_node_fraction(model: QSModel) -> float:
    """|distinct (feature, threshold)| / |internal nodes| of a model."""
    total = model.n_triples
    if total == 0:
        return 1.0
    unique = sum(len(group) for group in merge_nodes(model))
    return unique / total


class RSModel:
    """RapidScorer arrays compiled from a QSModel. Immutable after build."""

    def __init__(self, qs: QSModel, merged: bool = True):
        self.qs = qs
        self.merged = merged
        groups = merge_nodes(qs) if merged else _singleton_groups(qs)
        self.n_unique = sum(len(g) for g in groups)

        mfeat_start = np.zeros(qs.n_features + 1, dtype=np.int64)
        gam: list = []
        tstart: list[int] = [0]
        ttree: list[int] = []
        tslot: list[int] = []
        for k, group in enumerate(groups):
            mfeat_start[k + 1] = mfeat_start[k] + len(group)
            for mt in group:
                gam.append(mt.threshold)
                for (h, slot) in mt.targets:
                    ttree.append(h)
                    tslot.append(slot)
                tstart.append(len(ttree))
        self.mfeat_start = mfeat_start
        self.mgammas = np.array(gam, dtype=qs.gammas.dtype)
        self.mtarget_start = np.array(tstart, dtype=np.int64)
        self.target_tree = np.array(ttree, dtype=np.int32)
        self.target_slot = np.array(tslot, dtype=np.int32)

        # epitome of every bitmask slot, flattened for the kernel
        n_slots = len(qs.slot_tree)
        self.epitomes: list[Epitome] = []
        ep_off = np.zeros(n_slots, dtype=np.int64)
        ep_start = np.zeros(n_slots + 1, dtype=np.int64)
        chunks: list[bytes] = []
        for slot in range(n_slots):
            n_leaves = int(qs.tree_leaves[qs.slot_tree[slot]])
            e = encode_epitome(qs.mask_int(slot), n_leaves)
            self.epitomes.append(e)
            ep_off[slot] = e.offset
            ep_start[slot + 1] = ep_start[slot] + len(e.data)
            chunks.append(e.data)
        self.ep_off = ep_off
        self.ep_start = ep_start
        self.ep_bytes = np.frombuffer(b"".join(chunks), dtype=np.uint8).copy() \
            if chunks else np.zeros(0, dtype=np.uint8)

        # transposed-bitvector row table: ceil(L_h/8) rows per tree
        rows = np.zeros(qs.n_trees + 1, dtype=np.int64)
        init_rows: list[int] = []
        for h in range(qs.n_trees):
            pat = _init_pattern(int(qs.tree_leaves[h]))
            rows[h + 1] = rows[h] + len(pat)
            init_rows.extend(pat)
        self.tree_row_start = rows
        self.init_rows = np.array(init_rows, dtype=np.uint8)

    @property
    def compare_passes(self) -> int:
        """128-bit compare passes covering 16 lanes: 4 for 32-bit elements,
        2 for 16-bit quantized thresholds."""
        spec = self.qs.quantization
        if spec is not None and spec.splits and spec.width == 16:
            return 2
        return 4

    @property
    def unique_fraction(self) -> float:
        return self.n_unique / self.qs.n_triples if self.qs.n_triples else 1.0


def _singleton_groups(qs: QSModel) -> list[list[MergedTriple]]:
    out = []
    for k in range(qs.n_features):
        lo, hi = int(qs.feat_start[k]), int(qs.feat_start[k + 1])
        out.append([MergedTriple(k, qs.gammas[t].item(),
                                 [(int(qs.tree_of[t]), int(qs.slot_of[t]))])
                    for t in range(lo, hi)])
    return out


def build_rs_model(model_or_qs, merged: bool = True) -> RSModel:
    from .quickscorer import build_qs_model
    qs = model_or_qs if isinstance(model_or_qs, QSModel) else build_qs_model(model_or_qs)
    return RSModel(qs, merged=merged)


@njit(cache=True, nogil=True)
def _rs_kernel(mfeat_start, mgammas, mtarget_start, ttree, tslot,
               ep_off, ep_start, ep_bytes, tree_row_start, init_rows,
               X, trigger_ge, L, C, leafvalues, out, leaves):
    total_rows = init_rows.shape[0]
    M = tree_row_start.shape[0] - 1
    T = np.empty((total_rows, 16), dtype=np.uint8)
    for r in range(total_rows):
        for i in range(16):
            T[r, i] = init_rows[r]
    lane = np.empty(16, dtype=np.bool_)
    d = mfeat_start.shape[0] - 1
    for k in range(d):
        for u in range(mfeat_start[k], mfeat_start[k + 1]):
            g = mgammas[u]
            any_trig = False
            for i in range(16):
                trig = X[i, k] > g or (trigger_ge and X[i, k] == g)
                lane[i] = trig
                any_trig = any_trig or trig
            if not any_trig:
                break
            for tg in range(mtarget_start[u], mtarget_start[u + 1]):
                h = ttree[tg]
                slot = tslot[tg]
                base_row = tree_row_start[h] + ep_off[slot]
                eb = ep_start[slot]
                n_bytes = ep_start[slot + 1] - eb
                for bi in range(n_bytes):
                    b = ep_bytes[eb + bi]
                    r = base_row + bi
                    for i in range(16):
                        if lane[i]:
                            T[r, i] = T[r, i] & b
    for h in range(M):
        r0 = tree_row_start[h]
        r1 = tree_row_start[h + 1]
        for i in range(16):
            j = -1
            for r in range(r0, r1):
                b = T[r, i]
                if b != np.uint8(0):
                    c2 = 0
                    while (b >> c2) & 1 == 0:
                        c2 += 1
                    j = (r - r0) * 8 + c2
                    break
            leaves[i, h] = j
            base = (h * L + j) * C
            for c in range(C):
                out[c * 16 + i] += leafvalues[base + c]


def rs_score_batch_with_leaves(model: RSModel, X):
    """(flat class-major scores of length 16*C, exit leaves (16, M))."""
    qs = model.qs
    Xa = _coerce_batch(qs, X, RS_BATCH)
    out_dtype = np.float64 if qs.leafvalues.dtype == np.float64 else np.int64
    out = np.zeros(qs.n_classes * RS_BATCH, dtype=out_dtype)
    leaves = np.empty((RS_BATCH, qs.n_trees), dtype=np.int64)
    _rs_kernel(model.mfeat_start, model.mgammas, model.mtarget_start,
               model.target_tree, model.target_slot,
               model.ep_off, model.ep_start, model.ep_bytes,
               model.tree_row_start, model.init_rows,
               Xa, qs.trigger_ge, qs.n_leaves, qs.n_classes,
               qs.leafvalues, out, leaves)
    return out, leaves


def rs_score_batch(model: RSModel, X) -> np.ndarray:
    """RapidScorer scores for one batch of exactly 16 instances."""
    return rs_score_batch_with_leaves(model, X)[0]


def rs_score_batch_scalar_with_leaves(model: RSModel, X):
    """Mandatory scalar fallback; bit-identical to the lane path."""
    qs = model.qs
    Xa = _coerce_batch(qs, X, RS_BATCH)
    out_dtype = np.float64 if qs.leafvalues.dtype == np.float64 else np.int64
    out = np.zeros(qs.n_classes * RS_BATCH, dtype=out_dtype)
    leaves = np.empty((RS_BATCH, qs.n_trees), dtype=np.int64)
    masks = [expand_epitome(model.epitomes[s], int(qs.tree_leaves[qs.slot_tree[s]]))
             for s in range(len(model.epitomes))]
    ge = qs.trigger_ge
    for i in range(RS_BATCH):
        x = Xa[i]
        leafidx = qs.init_ints()
        for k in range(qs.n_features):
            xk = x[k]
            for u in range(int(model.mfeat_start[k]), int(model.mfeat_start[k + 1])):
                g = model.mgammas[u]
                if xk > g or (ge and xk == g):
                    for tg in range(int(model.mtarget_start[u]),
                                    int(model.mtarget_start[u + 1])):
                        leafidx[int(model.target_tree[tg])] &= \
                            masks[int(model.target_slot[tg])]
                else:
                    break
        for h in range(qs.n_trees):
            j = exit_leaf_index(leafidx[h])
            leaves[i, h] = j
            base = (h * qs.n_leaves + j) * qs.n_classes
            for c in range(qs.n_classes):
                out[c * RS_BATCH + i] += qs.leafvalues[base + c]
    return out, leaves


def rs_score_batch_scalar(model: RSModel, X) -> np.ndarray:
    return rs_score_batch_scalar_with_leaves(model, X)[0]


def rs_pipeline_python(model: RSModel, X, record_states: bool = False):
    """Instrumented transposed-layout pipeline (tests only).

    Runs the merged scan on an actual transposed block via apply_epitome
    and find_leaf_index_batch, optionally snapshotting every tree's 16
    bitvectors after each feature. Returns (leaves (16, M), states).
    """
    qs = model.qs
    Xa = _coerce_batch(qs, X, RS_BATCH)
    blocks = [transpose_batch([ (1 << int(qs.tree_leaves[h])) - 1 ] * RS_BATCH,
                              int(qs.tree_leaves[h]))
              for h in range(qs.n_trees)]
    ge = qs.trigger_ge
    states = []
    for k in range(qs.n_features):
        for u in range(int(model.mfeat_start[k]), int(model.mfeat_start[k + 1])):
            g = model.mgammas[u]
            lane = np.array([Xa[i, k] > g or (ge and Xa[i, k] == g)
                             for i in range(RS_BATCH)])
            if not lane.any():
                break
            for tg in range(int(model.mtarget_start[u]),
                            int(model.mtarget_start[u + 1])):
                h = int(model.target_tree[tg])
                apply_epitome(model.epitomes[int(model.target_slot[tg])],
                              blocks[h], lane)
        if record_states:
            states.append([untranspose_batch(b) for b in blocks])
    leaves = np.stack([find_leaf_index_batch(blocks[h])
                       for h in range(qs.n_trees)], axis=1)
    return leaves, states
