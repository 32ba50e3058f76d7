"""scikit-learn style front end for the DP mixture and its MLP head."""

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.decomposition import PCA
from sklearn.utils.validation import check_array, check_is_fitted

from ..exceptions import ConfigError, ShapeError
from .dpmm import fit_dpmm
from .head import fit_head
from .niw import NIWPrior


def _n_kept(n_components, n, d):
    if n_components is None:
        return None
    if isinstance(n_components, float) and 0 < n_components < 1:
        return n_components
    if isinstance(n_components, (int, np.integer)) and n_components >= 1:
        return min(int(n_components), d, n)
    raise ConfigError(
        f"n_components must be None, an int >= 1 or a float in (0, 1), got {n_components!r}")


class DPMMClustering(ClusterMixin, BaseEstimator):
    """Dirichlet-process mixture clustering with a distilled soft-assignment head.

    The mixture is fitted on a principal-component projection of the
    embeddings (``n_components``: a retained-variance fraction, a component
    count, or ``None`` for the raw coordinates). Its responsibilities are
    then distilled into a two-layer MLP that acts on the full embedding, and
    that head defines ``predict_proba``.

    Parameters
    ----------
    k_init : int
        Initial number of clusters (k-means++ seeding).
    max_epochs : int
    alpha : float
        DP concentration.
    kappa : float
        NIW mean strength.
    nu : float or None
        NIW degrees of freedom; ``None`` means dimension + 2.
    covariance : {"full", "diag"}
    n_components : float, int or None
    split_merge_every, patience : int
    head_hidden, head_max_epochs : int
    head_target : float
        Agreement with the mixture's hard labels at which head training stops.
    head_learning_rate : float
    seed : int

    Attributes
    ----------
    state_ : ClusterState
    head_ : MLPHead
    labels_ : ndarray
        Row-argmax of the head's memberships on the training data.
    n_clusters_ : int
    cluster_counts_, cluster_means_ : ndarray
        Mixture cluster sizes and means (in projected coordinates).
    projection_mean_, projection_components_ : ndarray
        Empty when no projection is used.
    """

    def __init__(self, k_init=30, max_epochs=200, alpha=1.0, kappa=1.0, nu=None,
                 covariance="full", n_components=0.99, split_merge_every=5, patience=10,
                 head_hidden=50, head_max_epochs=2000, head_target=0.99,
                 head_learning_rate=1e-2, seed=0):
        self.k_init = k_init
        self.max_epochs = max_epochs
        self.alpha = alpha
        self.kappa = kappa
        self.nu = nu
        self.covariance = covariance
        self.n_components = n_components
        self.split_merge_every = split_merge_every
        self.patience = patience
        self.head_hidden = head_hidden
        self.head_max_epochs = head_max_epochs
        self.head_target = head_target
        self.head_learning_rate = head_learning_rate
        self.seed = seed

    def project(self, X):
        """Coordinates the mixture sees."""
        check_is_fitted(self, "projection_mean_")
        X = np.asarray(X, dtype=float)
        if self.projection_components_.size == 0:
            return X
        return (X - self.projection_mean_) @ self.projection_components_.T

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        n, d = X.shape
        if self.covariance not in ("full", "diag"):
            raise ConfigError(f"covariance must be 'full' or 'diag', got {self.covariance!r}")
        kept = _n_kept(self.n_components, n, d)
        if kept is None:
            self.projection_mean_ = np.zeros(0)
            self.projection_components_ = np.zeros((0, d))
        else:
            pca = PCA(kept, svd_solver="full").fit(X)
            self.projection_mean_ = pca.mean_
            self.projection_components_ = pca.components_
        Y = self.project(X)
        prior = NIWPrior.from_data(Y, kappa=self.kappa, nu=self.nu, covariance=self.covariance)
        self.state_ = fit_dpmm(Y, k_init=self.k_init, max_epochs=self.max_epochs,
                               seed=self.seed, alpha=self.alpha, prior=prior,
                               split_merge_every=self.split_merge_every,
                               patience=self.patience)
        self.head_ = fit_head(X, self.state_.responsibilities, hidden=self.head_hidden,
                              max_epochs=self.head_max_epochs, target=self.head_target,
                              learning_rate=self.head_learning_rate, seed=self.seed)
        self.n_features_in_ = d
        self.n_clusters_ = self.state_.n_clusters
        self.cluster_counts_ = self.state_.counts
        self.cluster_means_ = self.state_.means
        self.labels_ = self.head_.predict_proba(X).argmax(axis=1)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "head_")
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ShapeError(f"expected (n, {self.n_features_in_}) embeddings, got {X.shape}")
        return self.head_.predict_proba(X)

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)
