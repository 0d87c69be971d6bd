"""Fixed-point quantization of thresholds, leaf values, and instances.

Values map through q(x) = floor(s*x) with a positive integer scale s,
rounding toward minus infinity (LambdaMART-style leaves are often
negative, so floor vs truncation matters). Stored integers must fit a
signed 16- or 32-bit word; per-class score accumulation happens in a
wider integer internally, so accumulation can never overflow for any
forest whose stored values fit the declared width.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .forest import (Forest, ModelError, ParseError, Tree, parse_forest,
                     serialize_forest)

WIDTH_DTYPES = {16: np.int16, 32: np.int32}


class OverflowQuantizationError(ModelError):
    """A quantized value does not fit the declared signed word width."""


class InfeasibleScaleError(ModelError):
    """No scale in [M, 2^B] satisfies the threshold and accumulator bounds."""


@dataclass(frozen=True)
class QuantizationSpec:
    """Scale, word width, and which parts of the model are quantized."""

    scale: int
    width: int = 16
    splits: bool = True
    leaves: bool = True

    def __post_init__(self) -> None:
        if self.scale < 1:
            raise ValueError(f"scale must be a positive integer, got {self.scale}")
        if self.width not in WIDTH_DTYPES:
            raise ValueError(f"width must be 16 or 32, got {self.width}")

    @property
    def int_range(self) -> tuple[int, int]:
        half = 1 << (self.width - 1)
        return -half, half - 1

    def to_json_obj(self) -> dict:
        return {"scale": self.scale, "width": self.width,
                "splits": self.splits, "leaves": self.leaves}


@dataclass
class QuantizedForest:
    """A Forest whose thresholds and/or leaf values are fixed-point integers.

    Tree/leaf structure is identical to the source forest; only the numeric
    payload changes. Immutable after construction.
    """

    forest: Forest
    spec: QuantizationSpec

    # Convenience pass-throughs so scorers can treat both model kinds alike.
    @property
    def trees(self) -> list[Tree]:
        return self.forest.trees

    @property
    def n_features(self) -> int:
        return self.forest.n_features

    @property
    def n_classes(self) -> int:
        return self.forest.n_classes

    @property
    def n_trees(self) -> int:
        return self.forest.n_trees

    @property
    def max_leaves(self) -> int:
        return self.forest.max_leaves

    @property
    def comparison(self) -> str:
        return self.forest.comparison

    @property
    def task(self) -> str:
        return self.forest.task


def quantize_value(x: float, scale: int, width: int | None = None) -> int:
    """floor(scale * x), optionally range-checked against a signed width."""
    if not math.isfinite(x):
        raise ValueError(f"cannot quantize non-finite value {x!r}")
    q = math.floor(scale * x)
    if width is not None:
        half = 1 << (width - 1)
        if not (-half <= q <= half - 1):
            raise OverflowQuantizationError(
                f"q({x}) = {q} does not fit a signed {width}-bit word")
    return q


def choose_scale(forest: Forest, width: int) -> int:
    """Largest power-of-two scale s in [M, 2^B] passing both fit bounds.

    Bounds checked for each candidate, largest first:
      * every quantized threshold lies in the signed B-bit range;
      * per class, M * max|quantized leaf value| fits below the signed
        B-bit maximum, so even a worst-case accumulated score is emittable
        at width B.
    """
    if width not in WIDTH_DTYPES:
        raise ValueError(f"width must be 16 or 32, got {width}")
    m = forest.n_trees
    lo_exp = max(0, math.ceil(math.log2(m)))
    if (1 << lo_exp) > (1 << width):
        raise InfeasibleScaleError(
            f"M={m} exceeds 2^B={1 << width}; no scale >= M fits width {width}"
            " (widen B)")
    half = 1 << (width - 1)
    thresholds = [nd.threshold for t in forest.trees for nd in t.nodes
                  if not nd.is_leaf]
    max_abs_leaf = max((abs(v) for t in forest.trees for nd in t.nodes
                        if nd.is_leaf for v in nd.values), default=0.0)
    for exp in range(width, lo_exp - 1, -1):
        s = 1 << exp
        ok = all(-half <= math.floor(s * g) <= half - 1 for g in thresholds)
        if ok:
            worst = m * _max_abs_quantized_leaf(forest, s)
            ok = worst <= half - 1
        if ok:
            return s
    raise InfeasibleScaleError(
        f"no power-of-two scale in [{m}, 2^{width}] fits width {width}"
        f" (max |leaf| = {max_abs_leaf}); widen B")


def _max_abs_quantized_leaf(forest: Forest, scale: int) -> int:
    worst = 0
    for tree in forest.trees:
        for nd in tree.nodes:
            if nd.is_leaf:
                for v in nd.values:
                    worst = max(worst, abs(math.floor(scale * v)))
    return worst


def quantize_forest(forest: Forest, spec: QuantizationSpec) -> QuantizedForest:
    """Replace thresholds and/or leaf values with their fixed-point images."""
    trees = []
    for ti, tree in enumerate(forest.trees):
        nodes = []
        for ni, nd in enumerate(tree.nodes):
            try:
                if nd.is_leaf and spec.leaves:
                    nd = replace(nd, values=tuple(
                        quantize_value(v, spec.scale, spec.width)
                        for v in nd.values))
                elif not nd.is_leaf and spec.splits:
                    nd = replace(nd, threshold=quantize_value(
                        nd.threshold, spec.scale, spec.width))
            except OverflowQuantizationError as e:
                raise OverflowQuantizationError(
                    f"tree {ti}, node {ni}: {e}") from None
            nodes.append(nd)
        trees.append(Tree(nodes=nodes, root=tree.root, n_leaves=tree.n_leaves))
    qforest = Forest(trees=trees, n_features=forest.n_features,
                     n_classes=forest.n_classes, comparison=forest.comparison,
                     task=forest.task)
    return QuantizedForest(forest=qforest, spec=spec)


def quantize_instance(x, scale: int, width: int = 16) -> np.ndarray:
    """Elementwise floor(scale * x_j) as a signed width-B integer vector."""
    half = 1 << (width - 1)
    out = np.empty(len(x), dtype=np.int64)
    for j, v in enumerate(x):
        if not math.isfinite(v):
            raise ValueError(f"feature {j} is not finite: {v!r}")
        q = math.floor(scale * v)
        if not (-half <= q <= half - 1):
            raise OverflowQuantizationError(
                f"feature {j}: q({v}) = {q} does not fit a signed "
                f"{width}-bit word")
        out[j] = q
    return out.astype(WIDTH_DTYPES[width])


def quantize_instances(X, scale: int, width: int = 16) -> np.ndarray:
    """quantize_instance over the rows of a matrix."""
    X = np.asarray(X, dtype=np.float64)
    return np.stack([quantize_instance(row, scale, width) for row in X])


# ---------------------------------------------------------------------------
# Exchange format for quantized models
# ---------------------------------------------------------------------------

def serialize_quantized(model: QuantizedForest) -> str:
    return serialize_forest(model.forest,
                            quantization=model.spec.to_json_obj())


def parse_model(document: str | dict):
    """Parse an exchange document into a Forest or QuantizedForest.

    Documents with a "quantization" object deserialize to QuantizedForest;
    plain ones to Forest.
    """
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as e:
            raise ParseError(
                f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    else:
        doc = document
    quant = doc.get("quantization") if isinstance(doc, dict) else None
    forest = parse_forest(doc)
    if quant is None:
        return forest
    spec = QuantizationSpec(scale=int(quant["scale"]), width=int(quant["width"]),
                            splits=bool(quant["splits"]), leaves=bool(quant["leaves"]))
    # Integer payloads were serialized as JSON numbers; restore int typing.
    trees = []
    for tree in forest.trees:
        nodes = []
        for nd in tree.nodes:
            if nd.is_leaf and spec.leaves:
                nd = replace(nd, values=tuple(int(v) for v in nd.values))
            elif not nd.is_leaf and spec.splits:
                nd = replace(nd, threshold=int(nd.threshold))
            nodes.append(nd)
        trees.append(Tree(nodes=nodes, root=tree.root, n_leaves=tree.n_leaves))
    qf = Forest(trees=trees, n_features=forest.n_features,
                n_classes=forest.n_classes, comparison=forest.comparison,
                task=forest.task)
    return QuantizedForest(forest=qf, spec=spec)


def unwrap(model) -> tuple[Forest, QuantizationSpec | None]:
    """(base forest, quantization spec or None) for either model kind."""
    if isinstance(model, QuantizedForest):
        return model.forest, model.spec
    return model, None
