"""Isolation forest with array-backed trees."""

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin
from sklearn.utils.validation import check_array, check_is_fitted

EULER_GAMMA = 0.5772156649015329


def average_path_length(n):
    """Expected unsuccessful-search depth of a random BST with ``n`` keys:
    ``2 H(n-1) - 2 (n-1) / n`` with ``H(m) ~ ln m + gamma``; 1 for n = 2 and
    0 below."""
    n = np.asarray(n, dtype=float)
    out = np.zeros_like(n)
    big = n > 2
    out[n == 2] = 1.0
    out[big] = 2.0 * (np.log(n[big] - 1.0) + EULER_GAMMA) - 2.0 * (n[big] - 1.0) / n[big]
    return out if out.ndim else float(out)


@dataclass
class IsolationTree:
    feature: np.ndarray    # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray

    @property
    def height(self):
        return int(self.depth.max())

    def path_length(self, X):
        node = np.zeros(len(X), dtype=np.intp)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] < self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active[idx] = self.feature[node[idx]] >= 0
        return self.depth[node] + average_path_length(self.size[node])


def build_tree(X, max_depth, rng):
    feature, threshold, left, right, size, depth = [], [], [], [], [], []

    def new_node(n, d):
        for col, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1),
                       (size, n), (depth, d)):
            col.append(v)
        return len(feature) - 1

    stack = [(np.arange(len(X)), new_node(len(X), 0))]
    while stack:
        rows, nid = stack.pop()
        d = depth[nid]
        if len(rows) <= 1 or d >= max_depth:
            continue
        sub = X[rows]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        splittable = np.flatnonzero(hi > lo)
        if len(splittable) == 0:
            continue
        f = int(rng.choice(splittable))
        t = rng.uniform(lo[f], hi[f])
        mask = sub[:, f] < t
        feature[nid], threshold[nid] = f, t
        left[nid] = new_node(int(mask.sum()), d + 1)
        right[nid] = new_node(int((~mask).sum()), d + 1)
        stack.append((rows[~mask], right[nid]))
        stack.append((rows[mask], left[nid]))
    return IsolationTree(
        np.array(feature), np.array(threshold), np.array(left), np.array(right),
        np.array(size), np.array(depth),
    )


class IsolationForest(OutlierMixin, BaseEstimator):
    """Isolation forest; ``score_samples`` is the anomaly score
    ``2 ** (-E[h(x)] / c(psi))`` in (0, 1], higher meaning more isolated.

    Parameters
    ----------
    n_trees : int, default=100
    max_samples : int, default=256
        Subsample size psi, capped at the number of training rows.
    max_depth : int or None
        Defaults to ``ceil(log2 psi)``.
    seed : int, default=0
    contamination : float, default=0.1
        Only used by ``predict`` to place the decision threshold.
    """

    def __init__(self, n_trees=100, max_samples=256, max_depth=None, seed=0,
                 contamination=0.1):
        self.n_trees = n_trees
        self.max_samples = max_samples
        self.max_depth = max_depth
        self.seed = seed
        self.contamination = contamination

    def fit(self, X, y=None):
        X = check_array(X)
        n = len(X)
        if n < 2:
            raise ValueError("isolation forest needs at least 2 points")
        psi = min(self.max_samples, n)
        depth = self.max_depth if self.max_depth is not None else math.ceil(math.log2(psi))
        rng = np.random.default_rng(self.seed)
        self.trees_ = []
        for _ in range(self.n_trees):
            rows = rng.choice(n, size=psi, replace=False)
            self.trees_.append(build_tree(X[rows], depth, rng))
        self.psi_ = psi
        self.normalizer_ = average_path_length(psi)
        self.n_features_in_ = X.shape[1]
        self.offset_ = float(np.quantile(self.score_samples(X), 1.0 - self.contamination))
        return self

    def expected_path_length(self, X):
        check_is_fitted(self)
        X = check_array(X)
        return np.mean([t.path_length(X) for t in self.trees_], axis=0)

    def score_samples(self, X):
        return 2.0 ** (-self.expected_path_length(X) / self.normalizer_)

    def predict(self, X):
        """-1 for outliers, 1 for inliers (scikit-learn convention)."""
        return np.where(self.score_samples(X) > self.offset_, -1, 1)
