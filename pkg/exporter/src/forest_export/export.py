"""Train small ensembles and dump them into the exchange format.

scikit-learn models export with comparison "leq" (its splits send
x <= threshold left); XGBoost dumps, when the library is present, export
with "lt". Random forests carry 1/M weights; gradient boosting emits its
init prediction as an extra single-leaf tree and the learning rate as the
per-tree weight. The engine folds weights on parse, so documents score as
plain sums.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.ensemble import GradientBoostingRegressor, RandomForestClassifier

from .datasets import split, synthesize, two_point_dataset, write_csv


class ExportError(Exception):
    pass


@dataclass
class ExportConfig:
    dataset: str = "magic"
    library: str = "rf"          # rf | gbt | xgb
    n_trees: int = 128           # desk-scale default; --paper-scale lifts it
    max_leaves: int = 64
    seed: int = 0
    split_ratio: float = 0.2
    out_dir: str = "exports"

    def __post_init__(self) -> None:
        # 32 and 64 are the standard grid; tiny values cover stump fixtures
        if not (2 <= self.max_leaves <= 64):
            raise ValueError(f"max_leaves must lie in 2..64, got {self.max_leaves}")
        if self.library not in ("rf", "gbt", "xgb"):
            raise ValueError(f"unknown library {self.library!r}")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")


@dataclass
class ExportResult:
    model_path: Path
    train_path: Path
    test_path: Path
    document: dict
    estimator: object
    X_test: np.ndarray = field(repr=False, default=None)
    y_test: np.ndarray = field(repr=False, default=None)


def _sklearn_tree_nodes(tree, classification: bool) -> list[dict]:
    """Raw exchange nodes from one fitted sklearn tree."""
    value = tree.value
    if value.ndim != 3 or value.shape[1] != 1:
        raise ExportError(f"unsupported tree shape: value array {value.shape}")
    nodes = []
    for nid in range(tree.node_count):
        left = int(tree.children_left[nid])
        right = int(tree.children_right[nid])
        if (left < 0) != (right < 0):
            raise ExportError(f"unsupported tree shape: node {nid} has "
                              "exactly one child")
        if left < 0:
            row = value[nid][0]
            if classification:
                total = row.sum()
                if total <= 0:
                    raise ExportError(
                        f"unsupported tree shape: leaf {nid} has no class mass")
                row = row / total
            nodes.append({"id": nid, "leaf": [float(v) for v in row]})
        else:
            nodes.append({"id": nid, "feature": int(tree.feature[nid]),
                          "threshold": float(tree.threshold[nid]),
                          "left": left, "right": right})
    return nodes


def export_random_forest(clf: RandomForestClassifier, n_features: int) -> dict:
    """Classification forest: per-leaf class distributions, 1/M weights."""
    m = len(clf.estimators_)
    trees = [{"nodes": _sklearn_tree_nodes(est.tree_, classification=True)}
             for est in clf.estimators_]
    return {"n_features": n_features, "n_classes": int(clf.n_classes_),
            "comparison": "leq", "task": "classification",
            "weights": [1.0 / m] * m, "trees": trees}


def export_gradient_boosting(reg: GradientBoostingRegressor,
                             n_features: int) -> dict:
    """Additive regression ensemble: init as a single-leaf tree, learning
    rate carried as per-tree weight."""
    init_value = float(reg.init_.constant_[0][0])
    trees = [{"nodes": [{"id": 0, "leaf": [init_value]}]}]
    weights = [1.0]
    for row in reg.estimators_:
        est = row[0]
        trees.append({"nodes": _sklearn_tree_nodes(est.tree_,
                                                   classification=False)})
        weights.append(float(reg.learning_rate))
    return {"n_features": n_features, "n_classes": 1,
            "comparison": "leq", "task": "ranking",
            "weights": weights, "trees": trees}


def export_xgboost(booster, n_features: int) -> dict:
    """XGBoost dump (x < threshold goes left, hence comparison "lt")."""
    trees = []
    for dump in booster.get_dump(dump_format="json"):
        raw = json.loads(dump)
        nodes: list[dict] = []

        def walk(nd) -> int:
            nid = len(nodes)
            nodes.append({})
            if "leaf" in nd:
                nodes[nid] = {"id": nid, "leaf": [float(nd["leaf"])]}
                return nid
            children = {c["nodeid"]: c for c in nd["children"]}
            rec = {"id": nid, "feature": int(str(nd["split"]).lstrip("f")),
                   "threshold": float(nd["split_condition"])}
            rec["left"] = walk(children[nd["yes"]])
            rec["right"] = walk(children[nd["no"]])
            nodes[nid] = rec
            return nid

        walk(raw)
        trees.append({"nodes": nodes})
    return {"n_features": n_features, "n_classes": 1, "comparison": "lt",
            "task": "ranking", "weights": None, "trees": trees}


def train(config: ExportConfig, X, y):
    if config.library == "rf":
        clf = RandomForestClassifier(n_estimators=config.n_trees,
                                     max_leaf_nodes=config.max_leaves,
                                     random_state=config.seed, n_jobs=1)
        clf.fit(X, y.astype(np.int64))
        return clf
    if config.library == "gbt":
        reg = GradientBoostingRegressor(n_estimators=config.n_trees,
                                        max_leaf_nodes=config.max_leaves,
                                        random_state=config.seed)
        reg.fit(X, y)
        return reg
    import xgboost as xgb  # optional; not on every mirror
    reg = xgb.XGBRegressor(n_estimators=config.n_trees,
                           max_leaves=config.max_leaves,
                           tree_method="hist", random_state=config.seed)
    reg.fit(X, y)
    return reg


def to_document(config: ExportConfig, estimator, n_features: int) -> dict:
    if config.library == "rf":
        return export_random_forest(estimator, n_features)
    if config.library == "gbt":
        return export_gradient_boosting(estimator, n_features)
    return export_xgboost(estimator.get_booster(), n_features)


def export_model(config: ExportConfig, X=None, y=None) -> ExportResult:
    """Synthesize (or accept) data, train, and write model + CSV splits."""
    if X is None:
        if config.dataset == "two-point":
            X, y = two_point_dataset()
            Xtr = Xte = X
            ytr = yte = y
        else:
            X, y, task = synthesize(config.dataset, config.seed)
            if task == "ranking" and config.library == "rf":
                raise ExportError(
                    f"dataset {config.dataset!r} is a ranking problem; "
                    "use --library gbt or xgb")
            Xtr, Xte, ytr, yte = split(X, y, config.split_ratio, config.seed)
    else:
        y = np.asarray(y, dtype=np.float64)
        Xtr, Xte, ytr, yte = split(np.asarray(X, float), y,
                                   config.split_ratio, config.seed)

    estimator = train(config, Xtr, ytr)
    doc = to_document(config, estimator, X.shape[1])

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{config.dataset}_{config.library}{config.n_trees}x{config.max_leaves}"
    model_path = out / f"{stem}.json"
    model_path.write_text(json.dumps(doc))
    train_path = out / f"{config.dataset}_train.csv"
    test_path = out / f"{config.dataset}_test.csv"
    write_csv(train_path, Xtr, ytr)
    write_csv(test_path, Xte, yte)
    return ExportResult(model_path=model_path, train_path=train_path,
                        test_path=test_path, document=doc,
                        estimator=estimator, X_test=Xte, y_test=yte)
