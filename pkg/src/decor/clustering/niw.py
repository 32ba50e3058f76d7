"""Normal-inverse-Wishart conjugate algebra for Gaussian clusters."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln, multigammaln

from ..exceptions import ConfigError, NumericalError

_JITTERS = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


def cholesky(A, what="matrix"):
    """Lower Cholesky factor, escalating diagonal jitter from 1e-8 to 1e-4
    (relative to the mean diagonal) before giving up."""
    scale = max(float(np.mean(np.diag(A))), np.finfo(float).tiny)
    eye = np.eye(len(A))
    for jitter in _JITTERS:
        try:
            return np.linalg.cholesky(A + jitter * scale * eye)
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(f"Cholesky factorisation failed for {what} even with jitter 1e-4")


def _logdet_chol(L):
    return 2.0 * np.log(np.diag(L)).sum()


@dataclass(frozen=True)
class NIWPrior:
    """NIW prior. ``psi`` is a ``(d, d)`` matrix, or a length-``d`` vector of
    per-dimension scales when ``covariance == "diag"``."""

    mean: np.ndarray
    kappa: float
    nu: float
    psi: np.ndarray
    covariance: str = "full"

    def __post_init__(self):
        d = self.dim
        if self.covariance not in ("full", "diag"):
            raise ConfigError(f"covariance must be 'full' or 'diag', got {self.covariance!r}")
        if self.kappa <= 0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")
        if self.nu < d:
            raise ConfigError(f"nu must be >= d = {d}, got {self.nu}")
        psi = np.asarray(self.psi)
        if self.covariance == "full":
            if psi.shape != (d, d) or not np.allclose(psi, psi.T):
                raise ConfigError("psi must be a symmetric (d, d) matrix")
            try:
                np.linalg.cholesky(psi)
            except np.linalg.LinAlgError:
                raise ConfigError("psi must be positive definite") from None
        elif psi.shape != (d,) or np.any(psi <= 0):
            raise ConfigError("diagonal psi must be a positive length-d vector")

    @property
    def dim(self):
        return len(self.mean)

    @classmethod
    def from_data(cls, X, kappa=1.0, nu=None, covariance="full"):
        """Data-scaled defaults: mean of ``X``, ``nu = d + 2`` and
        ``psi = I * mean per-dimension variance``."""
        X = np.asarray(X, dtype=float)
        d = X.shape[1]
        scale = float(X.var(axis=0).mean()) if len(X) > 1 else 1.0
        if scale <= 0:
            scale = 1.0
        psi = np.full(d, scale) if covariance == "diag" else np.eye(d) * scale
        return cls(X.mean(axis=0), float(kappa), float(d + 2 if nu is None else nu), psi,
                   covariance)


@dataclass(frozen=True)
class Stats:
    """Sufficient statistics of a point set: count, mean and scatter
    ``sum (x - mean)(x - mean)^T`` (a vector of diagonal entries in diag mode)."""

    n: int
    mean: np.ndarray
    scatter: np.ndarray

    @classmethod
    def of(cls, X, covariance="full"):
        X = np.asarray(X, dtype=float)
        n, d = X.shape
        if n == 0:
            return cls(0, np.zeros(d), np.zeros(d) if covariance == "diag" else np.zeros((d, d)))
        mean = X.mean(axis=0)
        D = X - mean
        scatter = (D**2).sum(axis=0) if covariance == "diag" else D.T @ D
        return cls(n, mean, scatter)

    def __add__(self, other):
        n = self.n + other.n
        if n == 0:
            return self
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        w = self.n * other.n / n
        extra = w * delta**2 if self.scatter.ndim == 1 else w * np.outer(delta, delta)
        return Stats(n, mean, self.scatter + other.scatter + extra)


def posterior(stats, prior):
    """Posterior NIW parameters ``(kappa_n, nu_n, mean_n, psi_n)``."""
    n = stats.n
    kn = prior.kappa + n
    nun = prior.nu + n
    if n == 0:
        return kn, nun, prior.mean.copy(), np.array(prior.psi, dtype=float)
    delta = stats.mean - prior.mean
    mun = (prior.kappa * prior.mean + n * stats.mean) / kn
    w = prior.kappa * n / kn
    if prior.covariance == "diag":
        psin = prior.psi + stats.scatter + w * delta**2
    else:
        psin = prior.psi + stats.scatter + w * np.outer(delta, delta)
    return kn, nun, mun, psin


def niw_log_marginal(stats, prior, what="cluster"):
    """Log marginal likelihood of the points summarised by ``stats``."""
    n = stats.n
    if n == 0:
        return 0.0
    d = prior.dim
    kn, nun, _, psin = posterior(stats, prior)
    if prior.covariance == "diag":
        # independent 1-D NIW per dimension with nu_1 = nu - d + 1
        nu0 = prior.nu - d + 1
        nu1 = nu0 + n
        return float(
            -0.5 * n * d * np.log(np.pi)
            + d * (gammaln(nu1 / 2) - gammaln(nu0 / 2))
            + 0.5 * nu0 * np.log(prior.psi).sum()
            - 0.5 * nu1 * np.log(psin).sum()
            + 0.5 * d * (np.log(prior.kappa) - np.log(kn))
        )
    L0 = cholesky(prior.psi, "the prior scale")
    Ln = cholesky(psin, what)
    return float(
        -0.5 * n * d * np.log(np.pi)
        + multigammaln(nun / 2, d)
        - multigammaln(prior.nu / 2, d)
        + 0.5 * prior.nu * _logdet_chol(L0)
        - 0.5 * nun * _logdet_chol(Ln)
        + 0.5 * d * (np.log(prior.kappa) - np.log(kn))
    )


def log_predictive(X, stats, prior, what="cluster"):
    """Posterior-predictive (multivariate Student-t) log density at rows of ``X``."""
    X = np.asarray(X, dtype=float)
    d = prior.dim
    kn, nun, mun, psin = posterior(stats, prior)
    if prior.covariance == "diag":
        df = prior.nu - d + 1 + stats.n
        var = psin * (kn + 1) / (kn * df)
        q = (X - mun) ** 2 / var
        per_dim = (
            gammaln((df + 1) / 2) - gammaln(df / 2)
            - 0.5 * np.log(df * np.pi * var)
            - (df + 1) / 2 * np.log1p(q / df)
        )
        return per_dim.sum(axis=1)
    df = nun - d + 1
    L = cholesky(psin * (kn + 1) / (kn * df), what)
    sol = solve_triangular(L, (X - mun).T, lower=True)
    maha = (sol**2).sum(axis=0)
    return (
        gammaln((df + d) / 2) - gammaln(df / 2)
        - 0.5 * d * np.log(df * np.pi)
        - 0.5 * _logdet_chol(L)
        - (df + d) / 2 * np.log1p(maha / df)
    )
