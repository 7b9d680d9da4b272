"""Regression decision tree with variance-reduction splits.

Splits minimize the summed squared error of the two children; leaves store
the mean of the training targets routed to them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TreeNode:
    value: float
    n: int
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"value": self.value, "n": self.n}
        return {
            "value": self.value,
            "n": self.n,
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TreeNode":
        if "feature" not in data:
            return cls(value=data["value"], n=data["n"])
        return cls(
            value=data["value"],
            n=data["n"],
            feature=data["feature"],
            threshold=data["threshold"],
            left=cls.from_dict(data["left"]),
            right=cls.from_dict(data["right"]),
        )


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[int, float] | None:
    n = len(y)
    best: tuple[float, int, float] | None = None
    base_sse = float(np.sum((y - y.mean()) ** 2))
    for feature in range(X.shape[1]):
        order = np.argsort(X[:, feature], kind="stable")
        xs, ys = X[order, feature], y[order]
        csum = np.cumsum(ys)
        csum_sq = np.cumsum(ys**2)
        total, total_sq = csum[-1], csum_sq[-1]
        for i in range(min_leaf, n - min_leaf + 1):
            if i < len(xs) and xs[i - 1] == xs[i]:
                continue  # cannot split between equal values
            left_sse = csum_sq[i - 1] - csum[i - 1] ** 2 / i
            right_n = n - i
            right_sum = total - csum[i - 1]
            right_sse = (total_sq - csum_sq[i - 1]) - right_sum**2 / right_n
            sse = float(left_sse + right_sse)
            if best is None or sse < best[0] - 1e-12:
                threshold = (xs[i - 1] + xs[i]) / 2.0
                best = (sse, feature, float(threshold))
    if best is None or best[0] >= base_sse - 1e-12:
        return None
    return best[1], best[2]


class RegressionTree:
    def __init__(self, max_depth: int = 8, min_leaf: int = 20):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.root: TreeNode | None = None

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RegressionTree":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        self.root = self._grow(X, y, depth=0)
        return self

    def _grow(self, X: np.ndarray, y: np.ndarray, depth: int) -> TreeNode:
        node = TreeNode(value=float(y.mean()), n=len(y))
        if depth >= self.max_depth or len(y) < 2 * self.min_leaf:
            return node
        split = _best_split(X, y, self.min_leaf)
        if split is None:
            return node
        feature, threshold = split
        mask = X[:, feature] <= threshold
        node.feature = feature
        node.threshold = threshold
        node.left = self._grow(X[mask], y[mask], depth + 1)
        node.right = self._grow(X[~mask], y[~mask], depth + 1)
        return node

    def _route(self, x: np.ndarray) -> TreeNode:
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([self._route(x).value for x in X])

    def apply(self, X: np.ndarray) -> list[TreeNode]:
        """Leaf node reached by each row; exposed for consistency checks."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return [self._route(x) for x in X]

    def to_dict(self) -> dict:
        return {"max_depth": self.max_depth, "min_leaf": self.min_leaf, "root": self.root.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "RegressionTree":
        tree = cls(max_depth=data["max_depth"], min_leaf=data["min_leaf"])
        tree.root = TreeNode.from_dict(data["root"])
        return tree
