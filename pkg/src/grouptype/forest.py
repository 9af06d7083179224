"""Seeded bagged decision-tree ensemble for binary labels.

Each tree is a CART classifier (Gini impurity) grown on a bootstrap sample,
drawing a fresh random feature subset at every split. Tree ``i`` uses the
generator ``default_rng([seed, i])`` so the ensemble does not depend on the
order in which trees are trained.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np


@dataclass
class Tree:
    feature: np.ndarray      # -1 marks a leaf
    threshold: np.ndarray    # go left when x <= threshold
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray        # fraction of positive samples at the node

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return self.value[node]
            a = rows[active]
            na = node[active]
            go_left = X[a, f[active]] <= self.threshold[na]
            node[a] = np.where(go_left, self.left[na], self.right[na])

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(np.array(d["feature"], dtype=np.int64),
                   np.array(d["threshold"], dtype=np.float64),
                   np.array(d["left"], dtype=np.int64), np.array(d["right"], dtype=np.int64),
                   np.array(d["value"], dtype=np.float64))


def _best_split(xs_all: np.ndarray, y: np.ndarray, feats, min_leaf: int):
    """Lowest weighted Gini split over ``feats``; returns (impurity, feature, threshold) or None."""
    n = len(y)
    best = None
    i = np.arange(1, n)
    ok_size = (i >= min_leaf) & (n - i >= min_leaf)
    for f in feats:
        x = xs_all[:, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        pos = np.cumsum(y[order])[:-1]
        valid = ok_size & (xs[1:] > xs[:-1])
        if not valid.any():
            continue
        total = pos[-1] + y[order][-1]
        nl = i.astype(np.float64)
        nr = n - nl
        pl = pos / nl
        pr = (total - pos) / nr
        imp = nl * 2 * pl * (1 - pl) + nr * 2 * pr * (1 - pr)
        imp = np.where(valid, imp, np.inf)
        j = int(np.argmin(imp))
        if best is None or imp[j] < best[0]:
            lo, hi = xs[j], xs[j + 1]
            thr = lo + (hi - lo) / 2
            if not lo <= thr < hi:
                thr = lo
            best = (float(imp[j]), int(f), float(thr))
    return best


def fit_tree(X: np.ndarray, y: np.ndarray, rng: np.random.Generator, max_depth: int = 8,
             min_samples_leaf: int = 2, max_features: int | None = None) -> Tree:
    n_feat = X.shape[1]
    k = max_features or max(1, math.ceil(math.sqrt(n_feat)))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(v):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(v)
        return len(value) - 1

    y = y.astype(np.float64)
    root = new_node(float(y.mean()) if len(y) else 0.0)
    stack = [(np.arange(len(y)), 0, root)]
    while stack:
        idx, depth, node = stack.pop()
        ys = y[idx]
        p = value[node]
        if depth >= max_depth or len(idx) < 2 * min_samples_leaf or p in (0.0, 1.0):
            continue
        parent_imp = len(idx) * 2 * p * (1 - p)
        order = rng.permutation(n_feat)
        xs = X[idx]
        split = _best_split(xs, ys, order[:k], min_samples_leaf)
        if split is None and k < n_feat:
            split = _best_split(xs, ys, order[k:], min_samples_leaf)
        if split is None or split[0] >= parent_imp - 1e-12:
            continue
        _, f, thr = split
        go_left = xs[:, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(float(y[li].mean()))
        right[node] = new_node(float(y[ri].mean()))
        stack.append((ri, depth + 1, right[node]))
        stack.append((li, depth + 1, left[node]))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(value, dtype=np.float64))


def fit_forest(X: np.ndarray, y: np.ndarray, n_trees: int = 100, max_depth: int = 8,
               min_samples_leaf: int = 2, max_features: int | None = None, seed: int = 0,
               threads: int = 1) -> list[Tree]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n = len(y)

    def one(i):
        rng = np.random.default_rng([seed, i])
        boot = rng.integers(0, n, n)
        return fit_tree(X[boot], y[boot], rng, max_depth, min_samples_leaf, max_features)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, range(n_trees)))
    return [one(i) for i in range(n_trees)]


def forest_proba(trees: list[Tree], X: np.ndarray) -> np.ndarray:
    """Mean of the trees' leaf probabilities, summed in tree order."""
    X = np.asarray(X, dtype=np.float64)
    acc = np.zeros(len(X))
    for t in trees:
        acc += t.predict(X)
    return acc / len(trees)
