"""CART regression trees grown best-first, and bagged forests of them."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np


def _best_split(X: np.ndarray, y: np.ndarray, idx: np.ndarray):
    """Return ``(gain, feature, threshold)`` of the best SSE-reducing split, or None."""
    ys = y[idx]
    n = len(idx)
    if n < 2:
        return None
    total = ys.sum()
    base = float(np.dot(ys, ys) - total * total / n)
    best = None
    for j in range(X.shape[1]):
        xj = X[idx, j]
        order = np.argsort(xj, kind="stable")
        xs, yo = xj[order], ys[order]
        csum = np.cumsum(yo)[:-1]
        csq = np.cumsum(yo * yo)[:-1]
        nl = np.arange(1, n)
        nr = n - nl
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        sse_l = csq - csum * csum / nl
        sse_r = (np.dot(yo, yo) - csq) - (total - csum) ** 2 / nr
        gain = base - (sse_l + sse_r)
        gain = np.where(valid, gain, -np.inf)
        k = int(np.argmax(gain))
        g = float(gain[k])
        if best is None or g > best[0]:
            best = (g, j, 0.5 * (xs[k] + xs[k + 1]))
    if best is None or not best[0] > 1e-12 * max(base, 1e-300):
        return None
    return best


@dataclass
class RegressionTree:
    """Flat-array tree: node ``i`` splits on ``feature[i] <= threshold[i]``; leaves have feature -1."""

    max_leaf_nodes: int = 8
    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    def _add(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        return len(self.value) - 1

    def fit(self, X, y) -> "RegressionTree":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if len(X) == 0:
            raise ValueError("cannot fit a tree on an empty training set")
        if self.max_leaf_nodes < 1:
            raise ValueError("max_leaf_nodes must be >= 1")
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []
        root = self._add(y.mean())
        heap = []
        counter = 0

        def push(node, idx):
            nonlocal counter
            split = _best_split(X, y, idx)
            if split is not None:
                # max-heap on gain; counter keeps expansion order deterministic
                heapq.heappush(heap, (-split[0], counter, node, idx, split))
                counter += 1

        push(root, np.arange(len(y)))
        leaves = 1
        while heap and leaves < self.max_leaf_nodes:
            _, _, node, idx, (_, j, thr) = heapq.heappop(heap)
            mask = X[idx, j] <= thr
            li, ri = idx[mask], idx[~mask]
            l_node, r_node = self._add(y[li].mean()), self._add(y[ri].mean())
            self.feature[node], self.threshold[node] = j, float(thr)
            self.left[node], self.right[node] = l_node, r_node
            leaves += 1
            push(l_node, li)
            push(r_node, ri)
        return self

    @property
    def n_leaves(self) -> int:
        return sum(f == -1 for f in self.feature)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if not self.value:
            raise RuntimeError("tree is not fitted")
        feat = np.array(self.feature)
        thr = np.array(self.threshold)
        left = np.array(self.left)
        right = np.array(self.right)
        node = np.zeros(len(X), dtype=int)
        active = feat[node] >= 0
        while active.any():
            n = node[active]
            go_left = X[active, feat[n]] <= thr[n]
            node[active] = np.where(go_left, left[n], right[n])
            active = feat[node] >= 0
        return np.array(self.value)[node]

    def to_dict(self) -> dict:
        return {"max_leaf_nodes": self.max_leaf_nodes, "feature": self.feature,
                "threshold": self.threshold, "left": self.left, "right": self.right,
                "value": self.value}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(**d)


@dataclass
class RandomForest:
    n_trees: int = 10
    max_leaf_nodes: int = 8
    bootstrap: bool = True
    seed: int = 0
    trees: list[RegressionTree] = field(default_factory=list)

    def fit(self, X, y) -> "RandomForest":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if len(X) == 0:
            raise ValueError("cannot fit a forest on an empty training set")
        rng = np.random.default_rng(self.seed)
        self.trees = []
        for _ in range(self.n_trees):
            idx = rng.integers(0, len(X), len(X)) if self.bootstrap else np.arange(len(X))
            self.trees.append(RegressionTree(self.max_leaf_nodes).fit(X[idx], y[idx]))
        return self

    def predict(self, X) -> np.ndarray:
        if not self.trees:
            raise RuntimeError("forest is not fitted")
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def to_dict(self) -> dict:
        return {"n_trees": self.n_trees, "max_leaf_nodes": self.max_leaf_nodes,
                "bootstrap": self.bootstrap, "seed": self.seed,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        d = dict(d)
        trees = [RegressionTree.from_dict(t) for t in d.pop("trees")]
        return cls(**d, trees=trees)


def tree_fit(X, y, max_leaf_nodes: int = 8) -> RegressionTree:
    return RegressionTree(max_leaf_nodes).fit(X, y)


def forest_fit(X, y, trees: int = 10, max_leaf_nodes: int = 8, seed: int = 0,
               bootstrap: bool = True) -> RandomForest:
    return RandomForest(trees, max_leaf_nodes, bootstrap, seed).fit(X, y)
