"""Bitvector tree-ensemble inference engine.

Scorers: naive descent (reference oracle), branching IE and flat-array NA
baselines, scalar QuickScorer, lane-parallel VQS, and RapidScorer, in
float and fixed-point variants.
"""

from .forest import (LEQ, LT, Forest, ModelError, Node, ParseError, Tree,
                     ValidationError, fold_weights, forests_equivalent,
                     naive_exit_leaf, naive_score, naive_score_with_leaves,
                     parse_forest, serialize_forest, validate)
from .quantize import (InfeasibleScaleError, OverflowQuantizationError,
                       QuantizationSpec, QuantizedForest, choose_scale,
                       parse_model, quantize_forest, quantize_instance,
                       quantize_instances, quantize_value, serialize_quantized)
from .quickscorer import (QSModel, build_bitmask, build_qs_model,
                          exit_leaf_index, qs_score, qs_score_with_leaves)
from .vqs import (lane_width, vqs_score_batch, vqs_score_batch_scalar,
                  widen_lane_mask)
from .rapidscorer import (Epitome, RSModel, apply_epitome, build_rs_model,
                          encode_epitome, expand_epitome,
                          find_leaf_index_batch, merge_nodes, rs_score_batch,
                          rs_score_batch_scalar, transpose_batch,
                          untranspose_batch, unique_node_fraction)
from .baseline import (IEModel, NativeLayout, build_ie, build_native,
                       ie_score, na_score)
from .data import Dataset, load_dataset
from .bench import (BenchConfig, accuracy_report, merge_stats, run_benchmark,
                    score_checksum, verify_equivalence)

__version__ = "0.1.0"
