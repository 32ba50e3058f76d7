"""Dirichlet-process Gaussian mixture with split/merge moves.

Hard-assignment variant: every epoch re-assigns points to the cluster
with the highest (stick weight x NIW posterior predictive) score, refreshes
per-cluster 2-means sub-clusters and, every ``split_merge_every`` epochs,
proposes splitting each cluster into its sub-clusters and merging
closest-mean pairs.  A move is accepted when its Hastings ratio exceeds 1.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from ..exceptions import ConfigError
from .kmeans import kmeans, kmeans_plusplus, lloyd
from .niw import NIWPrior, Stats, log_predictive, niw_log_marginal

logger = logging.getLogger(__name__)


def split_log_ratio(stats, sub_a, sub_b, prior, alpha, what="cluster"):
    """log Hastings ratio for splitting ``stats`` into ``sub_a`` and ``sub_b``."""
    return float(
        np.log(alpha)
        + gammaln(sub_a.n) + gammaln(sub_b.n) - gammaln(stats.n)
        + niw_log_marginal(sub_a, prior, what) + niw_log_marginal(sub_b, prior, what)
        - niw_log_marginal(stats, prior, what)
    )


def merge_log_ratio(a, b, prior, alpha, what="cluster pair"):
    """log Hastings ratio for fusing clusters ``a`` and ``b``."""
    return -split_log_ratio(a + b, a, b, prior, alpha, what)


def stick_weights(counts, alpha):
    """Posterior-mean stick-breaking weights, sticks ordered by size."""
    counts = np.asarray(counts, dtype=float)
    order = np.argsort(-counts, kind="stable")
    c = counts[order]
    tail = np.concatenate([np.cumsum(c[::-1])[::-1][1:], [0.0]])
    v = (1.0 + c) / (1.0 + c + alpha + tail)
    w = v * np.concatenate([[1.0], np.cumprod(1.0 - v)[:-1]])
    out = np.empty_like(w)
    out[order] = w
    return out


@dataclass
class ClusterState:
    """Fitted mixture. ``labels`` index into the per-cluster lists."""

    labels: np.ndarray
    stats: list
    sub_labels: np.ndarray
    sub_stats: list
    weights: np.ndarray
    responsibilities: np.ndarray
    prior: NIWPrior
    alpha: float
    n_epochs: int = 0
    converged: bool = False
    k_history: list = field(default_factory=list)
    moves: list = field(default_factory=list)

    @property
    def n_clusters(self):
        return len(self.stats)

    @property
    def counts(self):
        return np.array([s.n for s in self.stats])

    @property
    def means(self):
        return np.array([s.mean for s in self.stats])


def _two_means(X, rng):
    if len(X) < 2:
        return np.zeros(len(X), dtype=int)
    centers = X[kmeans_plusplus(X, 2, rng)].copy()
    labels, _, _ = lloyd(X, centers, max_iter=50)
    return labels


def _relabel(labels):
    """Drop empty clusters, keeping the order of the survivors."""
    used, new = np.unique(labels, return_inverse=True)
    return new.reshape(-1), len(used)


def _cluster_stats(X, labels, k, covariance):
    return [Stats.of(X[labels == j], covariance) for j in range(k)]


def _refresh_subclusters(X, labels, k, rng, covariance):
    sub = np.zeros(len(X), dtype=int)
    sub_stats = []
    for j in range(k):
        idx = np.flatnonzero(labels == j)
        s = _two_means(X[idx], rng)
        sub[idx] = s
        sub_stats.append((Stats.of(X[idx[s == 0]], covariance),
                          Stats.of(X[idx[s == 1]], covariance)))
    return sub, sub_stats


def _e_step(X, stats, prior, alpha):
    weights = stick_weights([s.n for s in stats], alpha)
    logp = np.column_stack([
        np.log(w) + log_predictive(X, s, prior, f"cluster {j}")
        for j, (w, s) in enumerate(zip(weights, stats))
    ])
    resp = np.exp(logp - logsumexp(logp, axis=1, keepdims=True))
    return logp.argmax(axis=1), resp


def fit_dpmm(Z, k_init=30, max_epochs=200, seed=0, alpha=1.0, prior=None,
             covariance="full", split_merge_every=5, patience=10):
    """Fit the DP mixture to the rows of ``Z``; returns a :class:`ClusterState`."""
    X = np.asarray(Z, dtype=float)
    n = len(X)
    if k_init < 1 or n < k_init:
        raise ConfigError(f"need at least k_init={k_init} points, got {n}")
    if max_epochs < 1:
        raise ConfigError(f"max_epochs must be >= 1, got {max_epochs}")
    if alpha <= 0:
        raise ConfigError(f"alpha must be positive, got {alpha}")
    if prior is None:
        prior = NIWPrior.from_data(X, covariance=covariance)
    covariance = prior.covariance
    rng = np.random.default_rng(seed)

    labels, _ = kmeans(X, k_init, seed=int(rng.integers(2**32)))
    labels, k = _relabel(labels)
    history, moves = [], []
    stable = 0
    converged = False
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        stats = _cluster_stats(X, labels, k, covariance)
        new_labels, resp = _e_step(X, stats, prior, alpha)
        new_labels, new_k = _relabel(new_labels)
        changed = new_k != k or not np.array_equal(new_labels, labels)
        labels, k = new_labels, new_k
        stats = _cluster_stats(X, labels, k, covariance)
        sub, sub_stats = _refresh_subclusters(X, labels, k, rng, covariance)

        if epoch % split_merge_every == 0:
            labels, k, moved = _split_merge(X, labels, k, stats, sub, sub_stats,
                                            prior, alpha, epoch, moves)
            changed = changed or moved
        history.append(k)
        stable = 0 if changed else stable + 1
        if stable >= patience:
            converged = True
            break

    stats = _cluster_stats(X, labels, k, covariance)
    sub, sub_stats = _refresh_subclusters(X, labels, k, rng, covariance)
    _, resp = _e_step(X, stats, prior, alpha)
    logger.info("DPMM stopped after %d epochs with K=%d", epoch, k)
    return ClusterState(
        labels=labels, stats=stats, sub_labels=sub, sub_stats=sub_stats,
        weights=stick_weights([s.n for s in stats], alpha), responsibilities=resp,
        prior=prior, alpha=alpha, n_epochs=epoch, converged=converged,
        k_history=history, moves=moves,
    )


def _split_merge(X, labels, k, stats, sub, sub_stats, prior, alpha, epoch, moves):
    labels = labels.copy()
    touched = set()
    next_id = k
    for j in range(k):
        a, b = sub_stats[j]
        if a.n == 0 or b.n == 0:
            continue
        ratio = split_log_ratio(stats[j], a, b, prior, alpha, f"cluster {j}")
        if ratio > 0:
            labels[(labels == j) & (sub == 1)] = next_id
            touched.update((j, next_id))
            moves.append(("split", epoch, j, float(ratio)))
            next_id += 1

    means = np.array([s.mean for s in stats])
    d2 = ((means[:, None, :] - means[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    candidates = sorted({(min(i, j), max(i, j)) for i, j in enumerate(d2.argmin(axis=1))}
                        if k > 1 else [], key=lambda p: (d2[p], p))
    for i, j in candidates:
        if i in touched or j in touched:
            continue
        ratio = merge_log_ratio(stats[i], stats[j], prior, alpha, f"clusters {i}+{j}")
        if ratio > 0:
            labels[labels == j] = i
            touched.update((i, j))
            moves.append(("merge", epoch, (i, j), float(ratio)))

    if not touched:
        return labels, k, False
    labels, k = _relabel(labels)
    return labels, k, True
