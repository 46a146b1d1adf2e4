"""Shallow random forest with class-weighted Gini splits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import CompatibilityError, DataError
from .metrics import balanced_class_weights

FORMAT_VERSION = 1


@dataclass
class TreeNode:
    prob: float  # weighted fraction of class 1 reaching the node
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    candidates: tuple = ()

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def depth(self) -> int:
        return 0 if self.is_leaf else 1 + max(self.left.depth(), self.right.depth())

    def n_splits(self) -> int:
        return 0 if self.is_leaf else 1 + self.left.n_splits() + self.right.n_splits()

    def split_nodes(self):
        if not self.is_leaf:
            yield self
            yield from self.left.split_nodes()
            yield from self.right.split_nodes()

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.is_leaf:
            return np.full(X.shape[0], self.prob)
        go_left = X[:, self.feature] <= self.threshold
        out = np.empty(X.shape[0])
        out[go_left] = self.left.predict(X[go_left])
        out[~go_left] = self.right.predict(X[~go_left])
        return out

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"prob": self.prob}
        return {"prob": self.prob, "feature": self.feature, "threshold": self.threshold,
                "candidates": list(self.candidates),
                "left": self.left.to_dict(), "right": self.right.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "feature" not in d:
            return cls(d["prob"])
        return cls(d["prob"], d["feature"], d["threshold"], cls.from_dict(d["left"]),
                   cls.from_dict(d["right"]), tuple(d.get("candidates", ())))


@dataclass
class ForestModel:
    trees: list
    n_features: int
    degenerate: bool = False
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"format_version": FORMAT_VERSION, "kind": "forest", "n_features": self.n_features,
                "degenerate": self.degenerate, "params": self.params,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        if d.get("format_version") != FORMAT_VERSION or d.get("kind") != "forest":
            raise CompatibilityError("not a supported forest model file")
        return cls([TreeNode.from_dict(t) for t in d["trees"]], d["n_features"],
                   d.get("degenerate", False), d.get("params", {}))


def _gini(w0, w1):
    tot = w0 + w1
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(tot > 0, w1 / tot, 0.0)
    return 2.0 * p * (1.0 - p)


def _best_split(X, y, w, candidates):
    """Best (gain, feature, threshold) over candidate features; gain is the
    decrease in weighted Gini impurity."""
    w1 = np.where(y == 1, w, 0.0)
    w0 = w - w1
    W0, W1 = w0.sum(), w1.sum()
    parent = _gini(W0, W1) * (W0 + W1)
    best = (0.0, -1, 0.0)
    for f in candidates:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        c0 = np.cumsum(w0[order])[:-1]
        c1 = np.cumsum(w1[order])[:-1]
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        left = _gini(c0, c1) * (c0 + c1)
        right = _gini(W0 - c0, W1 - c1) * ((W0 - c0) + (W1 - c1))
        gain = np.where(valid, parent - left - right, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best[0] + 1e-12:
            best = (float(gain[i]), int(f), float((xs[i] + xs[i + 1]) / 2))
    return best


def _grow(X, y, w, depth, max_depth, max_features, rng) -> TreeNode:
    tot = w.sum()
    prob = float(w[y == 1].sum() / tot) if tot > 0 else 0.5
    node = TreeNode(prob)
    if depth >= max_depth or len(np.unique(y)) < 2:
        return node
    d = X.shape[1]
    candidates = rng.choice(d, size=min(max_features, d), replace=False)
    gain, f, thr = _best_split(X, y, w, candidates)
    if f < 0:
        return node
    mask = X[:, f] <= thr
    node.feature, node.threshold, node.candidates = f, thr, tuple(int(c) for c in candidates)
    node.left = _grow(X[mask], y[mask], w[mask], depth + 1, max_depth, max_features, rng)
    node.right = _grow(X[~mask], y[~mask], w[~mask], depth + 1, max_depth, max_features, rng)
    return node


def rf_train(X, y, n_trees: int = 100, max_depth: int = 2, max_features: int = 5,
             class_weights: dict | str | None = "balanced", seed: int = 0) -> ForestModel:
    """Bootstrap-aggregated depth-limited trees."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n_samples, n_features) matching y")
    counts = np.bincount(y, minlength=2)
    if counts.min() < 2:
        raise DataError("forest training needs at least 2 samples per class")
    if class_weights == "balanced":
        class_weights = balanced_class_weights(y)
    cw = class_weights or {0: 1.0, 1: 1.0}
    sample_w = np.array([cw[int(c)] for c in y])
    rng = np.random.default_rng(seed)
    n = len(y)
    trees = []
    for _ in range(n_trees):
        boot = rng.integers(0, n, size=n)
        mult = np.bincount(boot, minlength=n).astype(float)
        keep = mult > 0
        trees.append(_grow(X[keep], y[keep], (sample_w * mult)[keep], 0, max_depth,
                           max_features, rng))
    degenerate = all(t.is_leaf for t in trees)
    return ForestModel(trees, X.shape[1], degenerate,
                       {"n_trees": n_trees, "max_depth": max_depth,
                        "max_features": max_features, "seed": seed})


def rf_predict(model: ForestModel, X) -> np.ndarray:
    """Mean over trees of the leaf class-1 probability."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    return np.mean([t.predict(X) for t in model.trees], axis=0)
