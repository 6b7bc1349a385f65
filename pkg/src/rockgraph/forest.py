"""Random-forest regressor over graph-level features, built from scratch.

Trees split greedily on the summed (bulk + shear) variance reduction and
predict the mean target of their leaf samples. Both targets share one tree
structure. Bagging resamples rows only; every split considers all features.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class TreeNode:
    """Internal node (feature, threshold, children) or leaf (value)."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.value is not None

    def to_dict(self):
        if self.is_leaf:
            return {"value": [float(v) for v in self.value]}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc):
        if "value" in doc:
            return cls(value=np.asarray(doc["value"], dtype=np.float64))
        return cls(feature=int(doc["feature"]), threshold=float(doc["threshold"]),
                   left=cls.from_dict(doc["left"]), right=cls.from_dict(doc["right"]))


def _sse(y: np.ndarray) -> float:
    # sum of squared deviations from the mean, totalled over targets
    return float(((y - y.mean(axis=0)) ** 2).sum())


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Scan all features for the split maximizing total SSE reduction.

    Candidate thresholds are midpoints between consecutive distinct sorted
    values. Returns (gain, feature, threshold) or None if no valid split.
    """
    n = x.shape[0]
    parent = _sse(y)
    if parent <= 0.0:
        return None
    best_gain, best_feat, best_thr = 0.0, -1, 0.0
    for f in range(x.shape[1]):
        col = x[:, f]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        ys = y[order]
        csum = np.cumsum(ys, axis=0)
        csq = np.cumsum(ys * ys, axis=0)
        tot, tot_sq = csum[-1], csq[-1]
        sizes = np.arange(1, n)
        valid = (xs[:-1] < xs[1:]) & (sizes >= min_leaf) & (n - sizes >= min_leaf)
        if not valid.any():
            continue
        left_sse = (csq[:-1] - csum[:-1] ** 2 / sizes[:, None]).sum(axis=1)
        rsizes = (n - sizes)[:, None]
        right_sse = ((tot_sq - csq[:-1]) - (tot - csum[:-1]) ** 2 / rsizes).sum(axis=1)
        gains = np.where(valid, parent - left_sse - right_sse, -np.inf)
        i = int(np.argmax(gains))
        if gains[i] > best_gain:
            thr = float((xs[i] + xs[i + 1]) / 2.0)
            if thr <= xs[i]:
                # midpoint of adjacent floats can round down onto the left value
                thr = float(xs[i + 1])
            best_gain = float(gains[i])
            best_feat = f
            best_thr = thr
    if best_feat < 0:
        return None
    return best_gain, best_feat, best_thr


def _grow(x: np.ndarray, y: np.ndarray, depth: int, max_depth: int,
          min_leaf: int, importance: np.ndarray) -> TreeNode:
    if depth >= max_depth or x.shape[0] < 2 * min_leaf:
        return TreeNode(value=y.mean(axis=0))
    split = _best_split(x, y, min_leaf)
    if split is None:
        return TreeNode(value=y.mean(axis=0))
    gain, feat, thr = split
    importance[feat] += gain
    mask = x[:, feat] < thr
    return TreeNode(
        feature=feat, threshold=thr,
        left=_grow(x[mask], y[mask], depth + 1, max_depth, min_leaf, importance),
        right=_grow(x[~mask], y[~mask], depth + 1, max_depth, min_leaf, importance),
    )


def train_tree(x, y, seed: int | None = None, max_depth: int = 12,
               min_leaf: int = 2, bootstrap: bool = True):
    """Train one regression tree; returns (root, per-feature gain sums)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("x must be a nonempty 2D array")
    if y.shape[0] != x.shape[0]:
        raise ValueError("x and y row counts differ")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    if bootstrap:
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, x.shape[0], x.shape[0])
        x, y = x[idx], y[idx]
    importance = np.zeros(x.shape[1])
    root = _grow(x, y, 0, max_depth, min_leaf, importance)
    return root, importance


def _predict_tree(node: TreeNode, x: np.ndarray) -> np.ndarray:
    while not node.is_leaf:
        node = node.left if x[node.feature] < node.threshold else node.right
    return node.value


@dataclass
class Forest:
    """Bagged ensemble of joint two-target regression trees."""

    trees: list[TreeNode] = field(default_factory=list)
    importance_raw: np.ndarray | None = None
    feature_names: list[str] = field(default_factory=list)
    n_features: int = 0
    params: dict = field(default_factory=dict)


def train_forest(x, y, n_trees: int = 50, seed: int = 0, max_depth: int = 12,
                 min_leaf: int = 2, bootstrap: bool = True,
                 feature_names=None) -> Forest:
    x = np.asarray(x, dtype=np.float64)
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    seeds = np.random.SeedSequence(seed).generate_state(n_trees)
    trees = []
    importance = np.zeros(x.shape[1])
    for t in range(n_trees):
        root, imp = train_tree(x, y, seed=int(seeds[t]), max_depth=max_depth,
                               min_leaf=min_leaf, bootstrap=bootstrap)
        trees.append(root)
        importance += imp
    names = list(feature_names) if feature_names else [f"f{i}" for i in range(x.shape[1])]
    return Forest(
        trees=trees, importance_raw=importance, feature_names=names,
        n_features=x.shape[1],
        params={"n_trees": n_trees, "seed": seed, "max_depth": max_depth,
                "min_leaf": min_leaf, "bootstrap": bootstrap},
    )


def predict(forest: Forest, x) -> np.ndarray:
    """Mean over trees; accepts one feature vector or a matrix of rows."""
    if not forest.trees:
        raise RuntimeError("forest has no trained trees")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = np.atleast_2d(x)
    if rows.shape[1] != forest.n_features:
        raise ValueError(f"expected {forest.n_features} features, got {rows.shape[1]}")
    preds = np.array([[_predict_tree(t, row) for t in forest.trees] for row in rows])
    out = preds.mean(axis=1)
    return out[0] if single else out


def feature_importance(forest: Forest) -> np.ndarray:
    """Summed impurity decrease per feature, normalized to total 1."""
    if not forest.trees:
        raise RuntimeError("forest has no trained trees")
    total = forest.importance_raw.sum()
    if total <= 0.0:
        return np.zeros_like(forest.importance_raw)
    return forest.importance_raw / total


def save_forest(forest: Forest, path) -> None:
    doc = {
        "format_version": 1,
        "model_type": "forest",
        "params": forest.params,
        "n_features": forest.n_features,
        "feature_names": forest.feature_names,
        "importance_raw": [float(v) for v in forest.importance_raw],
        "trees": [t.to_dict() for t in forest.trees],
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_forest(path) -> Forest:
    doc = json.loads(Path(path).read_text())
    if doc.get("model_type") != "forest":
        raise ValueError(f"{path} is not a forest model file")
    return Forest(
        trees=[TreeNode.from_dict(t) for t in doc["trees"]],
        importance_raw=np.asarray(doc["importance_raw"], dtype=np.float64),
        feature_names=list(doc["feature_names"]),
        n_features=int(doc["n_features"]),
        params=dict(doc["params"]),
    )
