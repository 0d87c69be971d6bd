"""Generate the committed fixtures under fixtures/.

* depth3_forest.json + depth3_golden.json: an 8-tree, depth-3 ranking
  ensemble with 5 inputs whose expected scores and exit leaves come from
  the self-contained document walker below, NOT from the engine.
* magic_rf128x64.json + magic_test.csv: a 128-tree, max-64-leaf random
  forest trained with scikit-learn on a seeded synthetic stand-in for the
  Magic telescope data (10 features, 2 classes, min-max scaled into
  [0.01, 0.99]), exported in the exchange format with 1/M weights.
* golden_checksums.json: prediction checksums of the engine on the magic
  fixture, float and int16 families. These pin determinism for the CLI
  golden-path test; they are generated by the engine itself once and
  committed.

Run from the repository root:  python scripts/make_fixtures.py
Requires scikit-learn (a script-only dependency).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
SEED = 20240914


# ---------------------------------------------------------------------------
# Independent document walker (no engine imports): the hand-walk oracle.
# ---------------------------------------------------------------------------

def walk_document(doc: dict, x: list[float]) -> tuple[list[float], list[int]]:
    """Score one instance directly off the JSON document.

    Descends each tree by following left/right ids; computes each leaf's
    left-to-right index by counting leaves in document order along an
    explicit in-order walk. Weights (if any) are applied per tree.
    """
    weights = doc.get("weights") or [1.0] * len(doc["trees"])
    C = doc["n_classes"]
    leq = doc["comparison"] == "leq"
    total = [0.0] * C
    exit_leaves = []
    for w, tree in zip(weights, doc["trees"]):
        by_id = {n["id"]: n for n in tree["nodes"]}
        # leaf numbering: left-to-right, iterative DFS with left child first
        leaf_no: dict[int, int] = {}
        todo = [0]
        while todo:
            nid = todo.pop()
            nd = by_id[nid]
            if "leaf" in nd:
                leaf_no[nid] = len(leaf_no)
            else:
                todo.append(nd["right"])
                todo.append(nd["left"])
        nd = by_id[0]
        while "leaf" not in nd:
            xv = x[nd["feature"]]
            go_left = xv <= nd["threshold"] if leq else xv < nd["threshold"]
            nd = by_id[nd["left"] if go_left else nd["right"]]
        exit_leaves.append(leaf_no[nd["id"]])
        for c in range(C):
            total[c] += w * nd["leaf"][c]
    return total, exit_leaves


# ---------------------------------------------------------------------------
# depth-3 fixture
# ---------------------------------------------------------------------------

def full_depth3_tree(rng: np.random.Generator, d: int) -> dict:
    """A full depth-3 tree (7 internal nodes, 8 leaves) as raw JSON nodes."""
    nodes = []
    next_id = [0]

    def build(depth: int) -> int:
        nid = next_id[0]
        next_id[0] += 1
        if depth == 3:
            nodes.append({"id": nid, "leaf": [round(float(rng.uniform(-1, 1)), 6)]})
            return nid
        rec = {"id": nid, "feature": int(rng.integers(d)),
               "threshold": round(float(rng.uniform(0.05, 0.95)), 6)}
        nodes.append(rec)
        rec["left"] = build(depth + 1)
        rec["right"] = build(depth + 1)
        return nid

    build(0)
    return {"nodes": nodes}


def make_depth3() -> None:
    rng = np.random.default_rng(SEED)
    d = 5
    doc = {
        "n_features": d,
        "n_classes": 1,
        "comparison": "leq",
        "task": "ranking",
        "weights": None,
        "trees": [full_depth3_tree(rng, d) for _ in range(8)],
    }
    inputs = [[round(float(v), 6) for v in rng.uniform(0, 1, d)] for _ in range(5)]
    golden = []
    for x in inputs:
        score, leaves = walk_document(doc, x)
        golden.append({"input": x, "score": score, "exit_leaves": leaves})
    (FIXTURES / "depth3_forest.json").write_text(json.dumps(doc))
    (FIXTURES / "depth3_golden.json").write_text(json.dumps(golden, indent=1))
    print(f"depth3: {len(doc['trees'])} trees, goldens for {len(inputs)} inputs")


# ---------------------------------------------------------------------------
# magic-style fixture
# ---------------------------------------------------------------------------

def synth_magic(rng: np.random.Generator, n: int = 10000):
    """Seeded 10-feature, 2-class stand-in with Magic-like shape."""
    from sklearn.datasets import make_classification
    X, y = make_classification(
        n_samples=n, n_features=10, n_informative=6, n_redundant=2,
        n_clusters_per_class=2, class_sep=1.0, flip_y=0.06,
        random_state=SEED)
    lo, hi = X.min(axis=0), X.max(axis=0)
    X = 0.01 + 0.98 * (X - lo) / (hi - lo)   # thresholds stay inside (0, 1)
    return X, y


def export_sklearn_rf(clf, n_features: int) -> dict:
    trees = []
    for est in clf.estimators_:
        t = est.tree_
        nodes = []
        for nid in range(t.node_count):
            if t.children_left[nid] < 0:
                counts = t.value[nid][0]
                probs = counts / counts.sum()
                nodes.append({"id": nid, "leaf": [float(p) for p in probs]})
            else:
                nodes.append({"id": nid, "feature": int(t.feature[nid]),
                              "threshold": float(t.threshold[nid]),
                              "left": int(t.children_left[nid]),
                              "right": int(t.children_right[nid])})
        trees.append({"nodes": nodes})
    m = len(trees)
    return {"n_features": n_features, "n_classes": int(clf.n_classes_),
            "comparison": "leq", "task": "classification",
            "weights": [1.0 / m] * m, "trees": trees}


def make_magic() -> None:
    from sklearn.ensemble import RandomForestClassifier
    from sklearn.model_selection import train_test_split
    rng = np.random.default_rng(SEED + 1)
    X, y = synth_magic(rng)
    Xtr, Xte, ytr, yte = train_test_split(X, y, test_size=0.2, random_state=SEED)
    clf = RandomForestClassifier(n_estimators=128, max_leaf_nodes=64,
                                 random_state=SEED, n_jobs=1)
    clf.fit(Xtr, ytr)
    doc = export_sklearn_rf(clf, X.shape[1])
    (FIXTURES / "magic_rf128x64.json").write_text(json.dumps(doc))

    header = ",".join(f"f{j}" for j in range(X.shape[1])) + ",label"
    lines = [header]
    for row, label in zip(Xte, yte):
        lines.append(",".join(repr(float(v)) for v in row) + f",{int(label)}")
    (FIXTURES / "magic_test.csv").write_text("\n".join(lines) + "\n")
    print(f"magic: {len(doc['trees'])} trees, test split {Xte.shape}")

    # cross-check: engine argmax must equal sklearn predictions
    sys.path.insert(0, str(ROOT / "src"))
    from bitforest.bench import PreparedModel, accuracy_report, score_matrix, score_checksum
    from bitforest.data import Dataset
    from bitforest.quantize import QuantizationSpec, parse_model, quantize_forest

    model = parse_model((FIXTURES / "magic_rf128x64.json").read_text())
    prepared = PreparedModel(model, "magic_rf128x64")
    scores, _ = score_matrix(prepared, prepared.prepare_inputs(Xte), "qs")
    engine_pred = np.argmax(scores, axis=1)
    sk_pred = clf.predict(Xte)
    assert (engine_pred == sk_pred).all(), "engine argmax != sklearn predictions"
    print(f"engine vs sklearn predictions: identical on {len(yte)} rows")

    dataset = Dataset(Xte, yte.astype(np.float64), name="magic_test")
    table = accuracy_report(model, dataset, QuantizationSpec(2 ** 15, 16))
    accs = table.by_variant()
    print(table.to_text())
    ff = accs["split: float / leaf: float"]
    ii = accs["split: int16 / leaf: int16"]
    assert abs(ff - ii) <= 0.005, f"int16/int16 drifted {abs(ff - ii) * 100:.2f}pp"

    quantized = quantize_forest(model, QuantizationSpec(2 ** 15, 16))
    qprep = PreparedModel(quantized, "magic_rf128x64_q")
    qscores, _ = score_matrix(qprep, qprep.prepare_inputs(Xte), "qs")
    checks = {"float": score_checksum(scores), "int16": score_checksum(qscores)}
    (FIXTURES / "golden_checksums.json").write_text(json.dumps(checks, indent=1))
    print(f"checksums: {checks}")


if __name__ == "__main__":
    FIXTURES.mkdir(exist_ok=True)
    make_depth3()
    make_magic()
