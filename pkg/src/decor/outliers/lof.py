import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, OutlierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .robust import adaptive_k, robust_cut


def lof_scores(X, k):
    """Local outlier factor of every row of ``X`` (Euclidean).

    The k-neighbourhood holds every other point within the k-distance, so
    ties at the k-th distance are all included.  A point whose neighbours
    all coincide with it has infinite density; such points get LOF 1, and a
    point next to one gets LOF ``inf``.
    """
    X = check_array(X)
    n = len(X)
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must lie in [1, {n - 1}], got {k}")
    D = cdist(X, X)
    np.fill_diagonal(D, np.inf)
    kdist = np.partition(D, k - 1, axis=1)[:, k - 1]
    neigh = D <= kdist[:, None]
    reach = np.maximum(D, kdist[None, :])
    mean_reach = np.where(neigh, reach, 0.0).sum(axis=1) / neigh.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = mean_reach[:, None] / mean_reach[None, :]
    ratio = np.where(mean_reach[None, :] == 0, np.inf, ratio)
    lof = np.where(neigh, ratio, 0.0).sum(axis=1) / neigh.sum(axis=1)
    return np.where(mean_reach == 0, 1.0, lof)


class LocalOutlierFactor(OutlierMixin, BaseEstimator):
    """Transductive LOF: scores are computed for the fitted rows only.

    Parameters
    ----------
    n_neighbors : int or None, default=None
        ``None`` chooses ``adaptive_k(n, min_k, max_k)``.
    min_k, max_k : int, default=10, 50
    k_cut : float, default=3.0
        Robust-cut multiplier used by ``fit_predict``.
    """

    def __init__(self, n_neighbors=None, min_k=10, max_k=50, k_cut=3.0):
        self.n_neighbors = n_neighbors
        self.min_k = min_k
        self.max_k = max_k
        self.k_cut = k_cut

    def fit(self, X, y=None):
        X = check_array(X)
        k = self.n_neighbors or adaptive_k(len(X), self.min_k, self.max_k)
        self.n_neighbors_ = k
        self.scores_ = lof_scores(X, k)
        self.threshold_ = robust_cut(self.scores_, self.k_cut)
        self.n_features_in_ = X.shape[1]
        return self

    def fit_predict(self, X, y=None):
        self.fit(X)
        return np.where(self.scores_ > self.threshold_, -1, 1)

    @property
    def negative_outlier_factor_(self):
        check_is_fitted(self, "scores_")
        return -self.scores_
