import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats
from sklearn.metrics import adjusted_rand_score

from decor.clustering import (
    DPMMClustering,
    KMeansClustering,
    NIWPrior,
    Stats,
    fit_dpmm,
    fit_head,
    kmeans,
    kmeans_plusplus,
    lloyd,
    load_model,
    log_predictive,
    merge_log_ratio,
    niw_log_marginal,
    parse_assignments,
    read_assignments,
    save_model,
    soft_cluster,
    split_log_ratio,
    stick_weights,
    write_assignments,
)
from decor.clustering.dpmm import _two_means
from decor.clustering.io import dumps_model, loads_model
from decor.clustering.niw import cholesky
from decor.evaluation import hard_labels
from decor.exceptions import ConfigError, FormatError, NumericalError, ShapeError
from oracles import gaussian_blobs, triangle


def _unit_prior(d=1, nu=3.0):
    return NIWPrior(np.zeros(d), 1.0, nu, np.eye(d))


# -------------------------------------------------------------------- NIW

def _quadrature_density(x, mu0=0.0, kappa=1.0, nu=3.0, psi=1.0):
    """p(x) for a single 1-D point, integrating the variance out numerically.

    With sigma^2 ~ InvGamma(nu/2, psi/2) and mu | sigma^2 ~ N(mu0, sigma^2/kappa),
    x | sigma^2 is N(mu0, sigma^2 (1 + 1/kappa)).
    """
    def integrand(s2):
        return (stats.norm.pdf(x, mu0, math.sqrt(s2 * (1 + 1 / kappa)))
                * stats.invgamma.pdf(s2, nu / 2, scale=psi / 2))

    value, _ = integrate.quad(integrand, 0, np.inf, epsabs=1e-13, epsrel=1e-11, limit=200)
    return value


def test_log_marginal_of_one_point_matches_quadrature():
    prior = _unit_prior()
    got = niw_log_marginal(Stats.of(np.zeros((1, 1))), prior)
    assert got == pytest.approx(math.log(_quadrature_density(0.0)), abs=1e-9)
    # the same density through the predictive of an empty cluster
    pred = log_predictive(np.zeros((1, 1)), Stats.of(np.zeros((0, 1))), prior)[0]
    assert pred == pytest.approx(got, abs=1e-12)


@pytest.mark.parametrize("x", [-2.5, 0.7, 4.0])
def test_log_marginal_quadrature_off_centre(x):
    prior = NIWPrior(np.array([0.3]), 2.0, 4.0, np.array([[1.5]]))
    got = niw_log_marginal(Stats.of(np.array([[x]])), prior)
    want = math.log(_quadrature_density(x, 0.3, 2.0, 4.0, 1.5))
    assert got == pytest.approx(want, abs=1e-9)


def test_log_marginal_chain_rule():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((6, 3))
    prior = NIWPrior(np.zeros(3), 0.5, 5.0, np.diag([1.0, 2.0, 0.5]))
    for m in range(1, 6):
        lhs = niw_log_marginal(Stats.of(X[:m + 1]), prior)
        rhs = (niw_log_marginal(Stats.of(X[:m]), prior)
               + log_predictive(X[m:m + 1], Stats.of(X[:m]), prior)[0])
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_diagonal_mode_factorises():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((7, 2))
    diag = NIWPrior(np.zeros(2), 1.0, 4.0, np.array([1.0, 3.0]), "diag")
    joint = niw_log_marginal(Stats.of(X, "diag"), diag)
    # each coordinate is an independent 1-D NIW with nu - d + 1 degrees
    per_dim = sum(
        niw_log_marginal(Stats.of(X[:, [j]]), NIWPrior(np.zeros(1), 1.0, 3.0, np.array([[s]])))
        for j, s in enumerate([1.0, 3.0])
    )
    assert joint == pytest.approx(per_dim, abs=1e-10)


def test_empty_stats_and_order_invariance():
    prior = _unit_prior(2, 4.0)
    assert niw_log_marginal(Stats.of(np.zeros((0, 2))), prior) == 0.0
    X = np.random.default_rng(2).standard_normal((20, 2))
    a = niw_log_marginal(Stats.of(X), prior)
    b = niw_log_marginal(Stats.of(X[::-1]), prior)
    assert a == pytest.approx(b, abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(0, 30), st.integers(1, 4), st.integers(0, 2**31))
def test_stats_addition_matches_pooled(n1, n2, d, seed):
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((n1, d)), rng.standard_normal((n2, d)) + 3
    pooled = Stats.of(np.concatenate([A, B]))
    merged = Stats.of(A) + Stats.of(B)
    assert merged.n == pooled.n
    assert np.allclose(merged.mean, pooled.mean) and np.allclose(merged.scatter, pooled.scatter)


def test_prior_validation_and_defaults():
    with pytest.raises(ConfigError):
        NIWPrior(np.zeros(3), 1.0, 2.0, np.eye(3))
    with pytest.raises(ConfigError):
        NIWPrior(np.zeros(2), 0.0, 4.0, np.eye(2))
    with pytest.raises(ConfigError):
        NIWPrior(np.zeros(2), 1.0, 4.0, -np.eye(2))
    X = np.random.default_rng(3).standard_normal((50, 4)) * [1, 2, 3, 4]
    prior = NIWPrior.from_data(X)
    assert prior.nu == 6
    assert np.allclose(prior.psi, np.eye(4) * X.var(axis=0).mean())
    assert np.allclose(prior.mean, X.mean(axis=0))


def test_cholesky_jitter_and_failure():
    singular = np.array([[1.0, 1.0], [1.0, 1.0]])
    L = cholesky(singular)
    assert np.allclose(L @ L.T, singular, atol=1e-6)
    with pytest.raises(NumericalError, match="cluster 7"):
        cholesky(-np.eye(2), "cluster 7")


# ------------------------------------------------------------ split / merge

def test_split_ratio_monotonicity():
    rng = np.random.default_rng(0)
    two = np.concatenate([rng.normal(0, 0.3, (100, 2)), rng.normal(4, 0.3, (100, 2))])
    one = rng.normal(0, 1.0, (200, 2))
    for X, sign in ((two, 1), (one, -1)):
        prior = NIWPrior.from_data(X)
        sub = _two_means(X, np.random.default_rng(0))
        ratio = split_log_ratio(Stats.of(X), Stats.of(X[sub == 0]), Stats.of(X[sub == 1]),
                                prior, 1.0)
        assert sign * ratio > 0
        assert merge_log_ratio(Stats.of(X[sub == 0]), Stats.of(X[sub == 1]),
                               prior, 1.0) == pytest.approx(-ratio)


def test_stick_weights():
    w = stick_weights([10, 0, 30], 1.0)
    assert w.sum() < 1 and np.all(w > 0)
    assert w[2] > w[0] > w[1]
    assert np.allclose(stick_weights([5], 1.0), [6 / 7])


# -------------------------------------------------------------------- DPMM

def test_identical_points_collapse_to_one_cluster():
    X = np.ones((40, 2))
    prior = NIWPrior(np.zeros(2), 1.0, 4.0, np.eye(2))
    state = fit_dpmm(X, k_init=5, prior=prior, seed=0)
    assert state.n_clusters == 1
    assert np.allclose(state.responsibilities, 1.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_blob_recovery(seed):
    X, y = gaussian_blobs(200, triangle(5.0), 0.1, seed)
    state = fit_dpmm(X, k_init=10, seed=seed)
    assert state.n_clusters == 3
    assert adjusted_rand_score(y, state.labels) >= 0.99
    assert state.counts.sum() == len(X)
    assert np.allclose(state.responsibilities.sum(axis=1), 1.0, atol=1e-6)
    for j, (a, b) in enumerate(state.sub_stats):
        assert a.n + b.n == state.counts[j]


def test_dpmm_determinism_and_splits():
    X, y = gaussian_blobs(100, triangle(5.0), 0.1, 4)
    a = fit_dpmm(X, k_init=1, seed=3)
    b = fit_dpmm(X, k_init=1, seed=3)
    assert np.array_equal(a.labels, b.labels) and a.moves == b.moves
    # one starting cluster reaches three only through accepted splits
    assert [m[0] for m in a.moves] == ["split", "split"]
    assert all(m[3] > 0 for m in a.moves)
    assert a.k_history[0] == 1 and a.k_history[-1] == 3
    assert adjusted_rand_score(y, a.labels) >= 0.99


def test_merge_of_an_over_split_blob():
    X = np.random.default_rng(0).normal(0, 1.0, (200, 2))
    prior = NIWPrior.from_data(X)
    left, right = Stats.of(X[X[:, 0] < 0]), Stats.of(X[X[:, 0] >= 0])
    assert merge_log_ratio(left, right, prior, 1.0) > 0


def test_dpmm_errors():
    with pytest.raises(ConfigError):
        fit_dpmm(np.zeros((3, 2)), k_init=5)
    with pytest.raises(ConfigError):
        fit_dpmm(np.zeros((10, 2)), k_init=2, max_epochs=0)
    with pytest.raises(ConfigError):
        fit_dpmm(np.zeros((10, 2)), k_init=2, alpha=0)


# -------------------------------------------------------------------- head

def test_head_on_blobs_and_single_cluster():
    X, y = gaussian_blobs(100, triangle(5.0), 0.1, 0)
    state = fit_dpmm(X, k_init=10, seed=0)
    head = fit_head(X, state.responsibilities)
    P = soft_cluster(X, head)
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-6)
    assert np.mean(hard_labels(P) == state.labels) >= 0.99
    assert head.warning == ""

    single = fit_head(X, np.ones((len(X), 1)))
    assert np.allclose(soft_cluster(X, single), 1.0)
    with pytest.raises(ShapeError):
        soft_cluster(X[:, :1], head)


def test_head_reports_unreachable_target():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((60, 2))
    R = np.eye(3)[rng.integers(3, size=60)]  # labels unrelated to X
    head = fit_head(X, R, max_epochs=3)
    assert head.epochs == 3 and "below target" in head.warning


def test_hard_label_tie_rule():
    P = np.array([[0.2, 0.8], [0.5, 0.5], [1 / 3, 1 / 3, 1 / 3][:2]])
    assert list(hard_labels(P)) == [1, 0, 0]


# ------------------------------------------------------------------ kmeans

def test_kmeans_k_equals_n_and_k_one():
    X = np.random.default_rng(0).standard_normal((12, 3))
    labels, inertia = kmeans(X, 12, seed=0)
    assert inertia == pytest.approx(0.0, abs=1e-12) and len(set(labels)) == 12
    est = KMeansClustering(1, restarts=1).fit(X)
    assert np.allclose(est.cluster_centers_[0], X.mean(axis=0))
    assert est.inertia_ == pytest.approx(X.var(axis=0).sum() * len(X))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31))
def test_lloyd_inertia_non_increasing(k, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((40, 2))
    centers = X[kmeans_plusplus(X, k, rng)].copy()
    _, _, history = lloyd(X, centers)
    assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))


def test_kmeans_two_blobs_and_errors():
    X, y = gaussian_blobs(50, [[0, 0], [6, 0]], 0.5, 1)
    est = KMeansClustering(2, restarts=3, seed=4).fit(X)
    assert adjusted_rand_score(y, est.labels_) == 1.0
    assert np.array_equal(est.predict(X), est.labels_)
    assert np.array_equal(KMeansClustering(2, restarts=3, seed=4).fit(X).labels_, est.labels_)
    with pytest.raises(ConfigError):
        kmeans(X[:3], 4)


def test_kmeans_plusplus_with_duplicates():
    X = np.zeros((5, 2))
    idx = kmeans_plusplus(X, 3, np.random.default_rng(0))
    assert len(set(idx)) == 3


# --------------------------------------------------------------- estimator

def test_estimator_projection_and_predict():
    X, y = gaussian_blobs(100, triangle(5.0), 0.1, 2)
    est = DPMMClustering(k_init=10, seed=0).fit(X)
    assert est.n_clusters_ == 3
    assert adjusted_rand_score(y, est.labels_) >= 0.99
    assert est.projection_components_.shape == (2, 2)
    assert np.array_equal(est.predict(X), est.labels_)
    with pytest.raises(ShapeError):
        est.predict_proba(X[:, :1])


def test_estimator_low_rank_embeddings():
    # three blobs living in a 2-D subspace of a 40-D space
    X2, y = gaussian_blobs(100, triangle(5.0), 0.1, 5)
    basis = np.linalg.qr(np.random.default_rng(0).standard_normal((40, 2)))[0]
    X = X2 @ basis.T + 1e-6 * np.random.default_rng(1).standard_normal((300, 40))
    est = DPMMClustering(k_init=10, seed=0).fit(X)
    assert est.projection_components_.shape[0] == 2
    assert est.n_clusters_ == 3 and adjusted_rand_score(y, est.labels_) >= 0.99


@pytest.mark.parametrize("bad", [0, 1.5, -0.2, "x"])
def test_estimator_rejects_bad_components(bad):
    with pytest.raises(ConfigError):
        DPMMClustering(k_init=2, n_components=bad).fit(np.random.default_rng(0).random((20, 3)))


# ---------------------------------------------------------------------- io

def test_assignment_roundtrip(tmp_path):
    P = np.array([[0.1, 0.9], [0.5, 0.5], [1 / 3, 2 / 3]])
    write_assignments(P, tmp_path / "a.txt")
    labels, back = read_assignments(tmp_path / "a.txt")
    assert np.array_equal(back, P) and list(labels) == [1, 0, 1]
    text = (tmp_path / "a.txt").read_text()
    assert text.startswith("# K=2\n0, 1, 0.1, 0.9\n")


@pytest.mark.parametrize("text", ["", "K=2\n", "# K=2\n0, 1, 0.5\n", "# K=1\n1, 0, 1.0\n",
                                  "# K=1\n0, 0, abc\n"])
def test_assignment_format_errors(text):
    with pytest.raises(FormatError):
        parse_assignments(text)


def test_model_roundtrip(tmp_path):
    X, _ = gaussian_blobs(60, triangle(5.0), 0.1, 3)
    est = DPMMClustering(k_init=6, seed=1).fit(X)
    save_model(est, tmp_path / "m.dpm")
    back = load_model(tmp_path / "m.dpm")
    assert np.array_equal(back.predict_proba(X), est.predict_proba(X))
    assert back.get_params() == est.get_params()
    buf = dumps_model(est)
    assert buf[:4] == b"DPM1" and dumps_model(loads_model(buf)) == buf
    with pytest.raises(FormatError):
        loads_model(b"DPM2" + buf[4:])
    with pytest.raises(FormatError):
        loads_model(buf[:-3])
