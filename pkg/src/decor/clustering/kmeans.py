import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ..exceptions import ConfigError


def kmeans_plusplus(X, k, rng):
    """k-means++ seeding; returns the indices of the chosen centres."""
    n = len(X)
    first = int(rng.integers(n))
    chosen = [first]
    d2 = ((X - X[first]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # every remaining point coincides with a centre
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(rest))
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return np.array(chosen)


def _sq_dists(X, C):
    return np.maximum(
        (X**2).sum(1)[:, None] - 2 * X @ C.T + (C**2).sum(1)[None, :], 0.0
    )


def lloyd(X, centers, max_iter=300):
    """Lloyd iterations from ``centers`` until assignments stop changing.

    Returns ``(labels, centers, inertia_history)``; the history holds the
    inertia after every assignment step.
    """
    labels = None
    history = []
    for _ in range(max_iter):
        d2 = _sq_dists(X, centers)
        new = d2.argmin(axis=1)
        history.append(float(((X - centers[new]) ** 2).sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(len(centers)):
            members = labels == j
            if members.any():
                centers[j] = X[members].mean(axis=0)
    return labels, centers, history


class KMeansClustering(ClusterMixin, BaseEstimator):
    """Parametric baseline: k-means with k-means++ seeding.

    Attributes
    ----------
    labels_, cluster_centers_, inertia_, inertia_history_
    """

    def __init__(self, n_clusters=8, restarts=10, max_iter=300, seed=0):
        self.n_clusters = n_clusters
        self.restarts = restarts
        self.max_iter = max_iter
        self.seed = seed

    def fit(self, X, y=None):
        X = check_array(X)
        if self.n_clusters < 1 or len(X) < self.n_clusters:
            raise ConfigError(f"k-means needs 1 <= k <= n, got k={self.n_clusters}, n={len(X)}")
        rng = np.random.default_rng(self.seed)
        best = None
        for _ in range(max(1, self.restarts)):
            centers = X[kmeans_plusplus(X, self.n_clusters, rng)].copy()
            labels, centers, history = lloyd(X, centers, self.max_iter)
            if best is None or history[-1] < best[2][-1]:
                best = (labels, centers, history)
        self.labels_, self.cluster_centers_, self.inertia_history_ = best
        self.inertia_ = self.inertia_history_[-1]
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X)
        return _sq_dists(X, self.cluster_centers_).argmin(axis=1)


def kmeans(X, k, seed=0, restarts=1, max_iter=300):
    """Best-of-``restarts`` k-means++ / Lloyd. Returns ``(labels, inertia)``."""
    est = KMeansClustering(k, restarts=restarts, max_iter=max_iter, seed=seed).fit(X)
    return est.labels_, est.inertia_
