"""Multivariate Beta-binomial model: prior, conjugate update, posterior moments.

The distribution over S correlated proportions is kept in reduced form as a
sample size ``nu`` and a symmetric moment matrix ``A``: the diagonal entry
``A[m, m]`` parametrizes the marginal Beta(A[m, m], nu - A[m, m]) law of
proportion m, and the off-diagonal entry ``A[m1, m2]`` the Beta law of the
joint success probability of the pair. Updates stay integer-exact because
second moments are stored as counts, never as correlations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyClass
from .types import CoPrimaryEstimate, SimilarityMatrix


@dataclass(frozen=True)
class MBetaParams:
    """Reduced-form multivariate Beta parameters (prior or posterior)."""

    nu: float
    moment_matrix: np.ndarray

    def __post_init__(self):
        a = self.moment_matrix
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"moment matrix must be square, got {a.shape}")
        if not np.allclose(a, a.T):
            raise ValueError("moment matrix must be symmetric")
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        d = np.diag(a)
        if np.any(d <= 0) or np.any(d >= self.nu):
            raise ValueError("diagonal moments must lie strictly between 0 and nu")
        if np.any(a <= 0) or np.any(a > np.minimum.outer(d, d) + 1e-12):
            raise ValueError("off-diagonal moments must lie in (0, min(diagonals)]")

    @property
    def n_models(self) -> int:
        return self.moment_matrix.shape[0]


@dataclass(frozen=True)
class MomentUpdate:
    """Observed joint success counts: n subjects, U[m1, m2] joint successes."""

    n: int
    U: np.ndarray

    def __post_init__(self):
        u = self.U
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise DimensionMismatch(f"update matrix must be square, got {u.shape}")
        if not np.array_equal(u, u.T):
            raise ValueError("update matrix must be symmetric")
        d = np.diag(u)
        if np.any(u < 0) or np.any(d > self.n) or np.any(u > np.minimum.outer(d, d)):
            raise ValueError("joint counts must satisfy 0 <= U <= min(diagonals) <= n")

    def __add__(self, other: "MomentUpdate") -> "MomentUpdate":
        if self.U.shape != other.U.shape:
            raise DimensionMismatch("cannot add moment updates of different sizes")
        return MomentUpdate(n=self.n + other.n, U=self.U + other.U)


def uniform_prior(n_models: int) -> MBetaParams:
    """Vague prior of independent uniforms: nu = 2, diag(A) = 1, off-diag 0.5.

    Marginally this adds one correct and one wrong pseudo-prediction per
    model, with half of the correct pseudo-prediction counted as common to
    every model pair.
    """
    if n_models < 1:
        raise ValueError("need at least one model")
    a = np.full((n_models, n_models), 0.5)
    np.fill_diagonal(a, 1.0)
    return MBetaParams(nu=2.0, moment_matrix=a)


def moment_matrix(q: SimilarityMatrix) -> MomentUpdate:
    """Joint success counts of a similarity matrix: U = Q^T Q over integers."""
    entries = q.entries.astype(np.int64)
    return MomentUpdate(n=q.n, U=entries.T @ entries)


def posterior_update(prior: MBetaParams, data: MomentUpdate) -> MBetaParams:
    """Conjugate update: nu* = nu + n, A* = A + U."""
    if prior.moment_matrix.shape != data.U.shape:
        raise DimensionMismatch(
            f"prior is {prior.moment_matrix.shape}, update is {data.U.shape}"
        )
    return MBetaParams(nu=prior.nu + data.n, moment_matrix=prior.moment_matrix + data.U)


def posterior_moments(params: MBetaParams) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance matrix of the proportions.

    With alpha = diag(A), the mean is alpha / nu and the covariance is
    (nu * A - alpha alpha^T) / (nu^2 (nu + 1)), which reproduces the marginal
    Beta(alpha_m, nu - alpha_m) variances on the diagonal.
    """
    a = params.moment_matrix
    nu = params.nu
    alpha = np.diag(a).astype(float)
    mean = alpha / nu
    cov = (nu * a - np.outer(alpha, alpha)) / (nu * nu * (nu + 1.0))
    return mean, cov


def _posterior_for(q: SimilarityMatrix) -> MBetaParams:
    return posterior_update(uniform_prior(q.n_models), moment_matrix(q))


def regularized_estimate(
    q_se: SimilarityMatrix, q_sp: SimilarityMatrix
) -> CoPrimaryEstimate:
    """Posterior means and covariances under the uniform prior, per class.

    Proportions are shrunk slightly towards 0.5 and every variance is
    strictly positive, even for all-correct columns where the plug-in
    variance collapses to zero.
    """
    if q_se.n_models != q_sp.n_models:
        raise DimensionMismatch(
            f"{q_se.n_models} sensitivity columns vs {q_sp.n_models} specificity columns"
        )
    se_mean, se_cov = posterior_moments(_posterior_for(q_se))
    sp_mean, sp_cov = posterior_moments(_posterior_for(q_sp))
    return CoPrimaryEstimate(
        se_mean=se_mean,
        sp_mean=sp_mean,
        se_cov=se_cov,
        sp_cov=sp_cov,
        n1=q_se.n,
        n0=q_sp.n,
    )


def naive_estimate(q_se: SimilarityMatrix, q_sp: SimilarityMatrix) -> CoPrimaryEstimate:
    """Sample proportions with the plug-in covariance (n U - u u^T) / n^3.

    Kept for tests and diagnostics only; inference uses regularized_estimate.
    Collapses to zero variance for constant columns.
    """
    if q_se.n_models != q_sp.n_models:
        raise DimensionMismatch("per-class model counts differ")

    def one_class(q: SimilarityMatrix):
        if q.n < 1:
            raise EmptyClass(f"no {q.class_label} rows")
        u_mat = moment_matrix(q).U.astype(float)
        u = np.diag(u_mat)
        n = float(q.n)
        return u / n, (n * u_mat - np.outer(u, u)) / n**3

    se_mean, se_cov = one_class(q_se)
    sp_mean, sp_cov = one_class(q_sp)
    return CoPrimaryEstimate(
        se_mean=se_mean,
        sp_mean=sp_mean,
        se_cov=se_cov,
        sp_cov=sp_cov,
        n1=q_se.n,
        n0=q_sp.n,
    )
