"""Stochastic generators: correlated binary matrices, multivariate-Beta draws,
and group sizes.

Correlated binary rows use Gaussian-copula dichotomization: a latent
multivariate normal is thresholded at Phi^-1(1 - mean) per column, and each
pairwise latent correlation is root-solved on the bivariate normal CDF so
the induced binary correlation hits its target. Columns with mean exactly
one are emitted as constant ones, never sampled.

The multivariate Beta law fixes only first and mixed second moments, so its
sampler is one consistent completion: marginal Beta draws coupled by a
Gaussian copula whose correlation is the posterior correlation of the
moments, with pair moments driven by the averaged latent of the two margins.
The implied indicator-level correlations are therefore approximate and get
clipped to the range feasible for the drawn means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betaincinv, ndtr, ndtri

from . import mbeta, mvnorm
from .errors import DegenerateGroupSizes, DimensionMismatch, InfeasibleCorrelation
from .types import DISEASED, SimilarityMatrix


@dataclass(frozen=True)
class BinaryTargetSpec:
    """Target marginals and correlation for one class of binary rows.

    ``means`` may include exact ones (degenerate, constant columns);
    ``corr`` applies to the non-degenerate columns only, in order.
    """

    means: np.ndarray
    corr: np.ndarray
    n: int

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        if np.any(means <= 0.0) or np.any(means > 1.0):
            raise ValueError("means must lie in (0, 1]")
        k = int((means < 1.0).sum())
        corr = np.asarray(self.corr, dtype=float)
        if corr.shape != (k, k):
            raise DimensionMismatch(
                f"corr must be {k}x{k} for {k} non-degenerate columns, got {corr.shape}"
            )
        live = means[means < 1.0]
        ii, jj = np.triu_indices(k, 1)
        lo, hi = correlation_bounds(live[ii], live[jj])
        bad = (corr[ii, jj] < lo - 1e-9) | (corr[ii, jj] > hi + 1e-9)
        if np.any(bad):
            m1, m2 = ii[bad][0], jj[bad][0]
            raise InfeasibleCorrelation(
                f"corr[{m1},{m2}]={corr[m1, m2]:.4f} outside the feasible range "
                f"[{lo[bad][0]:.4f}, {hi[bad][0]:.4f}] for means "
                f"({live[m1]:.4f}, {live[m2]:.4f})"
            )


def correlation_bounds(p1, p2) -> tuple[np.ndarray, np.ndarray]:
    """Attainable binary correlation range for marginals p1, p2.

    Derived from the bounds max(0, p1+p2-1) <= P(both=1) <= min(p1, p2)
    on the joint success probability.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    sd = np.sqrt(p1 * (1.0 - p1) * p2 * (1.0 - p2))
    sd = np.where(sd <= 0, np.nan, sd)
    lo = (np.maximum(0.0, p1 + p2 - 1.0) - p1 * p2) / sd
    hi = (np.minimum(p1, p2) - p1 * p2) / sd
    return np.nan_to_num(lo, nan=0.0), np.nan_to_num(hi, nan=0.0)


def solve_latent_correlation(p1, p2, rho) -> np.ndarray:
    """Latent normal correlation that induces binary correlation ``rho``.

    Solves Phi2(t1, t2; lambda) = p11 by bisection, vectorized over inputs;
    the induced correlation matches the target to ~1e-8.
    """
    p1 = np.atleast_1d(np.asarray(p1, dtype=float))
    p2 = np.atleast_1d(np.asarray(p2, dtype=float))
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    p1, p2, rho = np.broadcast_arrays(p1, p2, rho)
    lo_r, hi_r = correlation_bounds(p1, p2)
    if np.any(rho < lo_r - 1e-9) or np.any(rho > hi_r + 1e-9):
        raise InfeasibleCorrelation("target correlation outside the attainable range")
    target = p1 * p2 + rho * np.sqrt(p1 * (1.0 - p1) * p2 * (1.0 - p2))
    # thresholds for success: entry = 1 when latent > t
    t1 = ndtri(1.0 - p1)
    t2 = ndtri(1.0 - p2)
    lo = np.full(p1.shape, -1.0 + 1e-12)
    hi = np.full(p1.shape, 1.0 - 1e-12)
    for _ in range(26):
        mid = 0.5 * (lo + hi)
        # P(latent1 > t1, latent2 > t2), increasing in the latent correlation
        val = mvnorm.bvn_cdf(-t1, -t2, mid)
        take_hi = val < target
        lo = np.where(take_hi, mid, lo)
        hi = np.where(take_hi, hi, mid)
    return 0.5 * (lo + hi)


def _clip_to_psd(lam: np.ndarray) -> np.ndarray:
    # Pairwise-solvable targets need not be jointly compatible: the assembled
    # latent matrix can be genuinely indefinite. Clip to the nearest PSD
    # correlation; the marginals stay exact, the induced correlations shift.
    vals, vecs = np.linalg.eigh(lam)
    if vals[0] >= 0:
        return lam
    lam = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    d = np.sqrt(np.clip(np.diag(lam), 1e-300, None))
    lam = lam / np.outer(d, d)
    lam = 0.5 * (lam + lam.T)
    np.fill_diagonal(lam, 1.0)
    return lam


def _latent_matrix(means: np.ndarray, corr: np.ndarray) -> np.ndarray:
    k = means.shape[0]
    lam = np.eye(k)
    if k > 1:
        ii, jj = np.triu_indices(k, 1)
        pairs = np.column_stack([means[ii], means[jj], corr[ii, jj]])
        uniq, inv = np.unique(np.round(pairs, 12), axis=0, return_inverse=True)
        sol = solve_latent_correlation(uniq[:, 0], uniq[:, 1], uniq[:, 2])[inv]
        lam[ii, jj] = sol
        lam[jj, ii] = sol
    return _clip_to_psd(lam)


def sample_correlated_binary(
    spec: BinaryTargetSpec,
    rng: np.random.Generator,
    class_label: str = DISEASED,
) -> SimilarityMatrix:
    """Draw ``spec.n`` i.i.d. binary rows with the target moments."""
    means = np.asarray(spec.means, dtype=float)
    s = means.shape[0]
    out = np.ones((spec.n, s), dtype=np.int8)
    live = means < 1.0
    k = int(live.sum())
    if k > 0:
        lam = _latent_matrix(means[live], np.asarray(spec.corr, dtype=float))
        chol = np.linalg.cholesky(lam + 1e-14 * np.eye(k))
        z = rng.standard_normal((spec.n, k))
        latent = z @ chol.T
        out[:, live] = latent > ndtri(1.0 - means[live])
    return SimilarityMatrix(entries=out, class_label=class_label)


@dataclass(frozen=True)
class ThetaDraw:
    """One draw of true parameters for both classes with correlation structure."""

    se: np.ndarray
    sp: np.ndarray
    corr_se: np.ndarray
    corr_sp: np.ndarray
    n_clipped: int = 0


def sample_mbeta(
    params: mbeta.MBetaParams, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, int]:
    """Draw proportions and implied indicator correlations for one class.

    Returns (theta, corr, n_clipped): theta has the exact Beta marginals,
    corr is derived from drawn pair moments and clipped to the range
    feasible for theta, with ``n_clipped`` pairs affected.
    """
    a = params.moment_matrix
    nu = params.nu
    s = a.shape[0]
    alpha = np.diag(a)
    if s == 1:
        theta = betaincinv(alpha[0], nu - alpha[0], rng.random())
        return np.atleast_1d(theta), np.ones((1, 1)), 0

    _, cov = mbeta.posterior_moments(params)
    copula = mvnorm.nearest_correlation(mvnorm.cov_to_corr(cov))
    chol = np.linalg.cholesky(copula + 1e-14 * np.eye(s))
    z = chol @ rng.standard_normal(s)
    theta = betaincinv(alpha, nu - alpha, ndtr(z))
    theta = np.clip(theta, 1e-9, 1.0 - 1e-9)

    ii, jj = np.triu_indices(s, 1)
    z_pair = (z[ii] + z[jj]) / np.sqrt(2.0 + 2.0 * copula[ii, jj])
    a_pair = a[ii, jj]
    theta_pair = betaincinv(a_pair, nu - a_pair, ndtr(z_pair))
    sd = np.sqrt(theta[ii] * (1 - theta[ii]) * theta[jj] * (1 - theta[jj]))
    rho = (theta_pair - theta[ii] * theta[jj]) / sd
    lo, hi = correlation_bounds(theta[ii], theta[jj])
    margin = 1e-6
    clipped = np.clip(rho, lo + margin, hi - margin)
    n_clipped = int((np.abs(clipped - rho) > 1e-12).sum())
    corr = np.eye(s)
    corr[ii, jj] = clipped
    corr[jj, ii] = clipped
    return theta, corr, n_clipped


def draw_theta(
    post_se: mbeta.MBetaParams, post_sp: mbeta.MBetaParams, rng: np.random.Generator
) -> ThetaDraw:
    """Draw (se, sp) with correlation structure from per-class posteriors."""
    se, corr_se, c1 = sample_mbeta(post_se, rng)
    sp, corr_sp, c2 = sample_mbeta(post_sp, rng)
    return ThetaDraw(se=se, sp=sp, corr_se=corr_se, corr_sp=corr_sp, n_clipped=c1 + c2)


def sample_group_sizes(
    n: int,
    n1_learn: int,
    n0_learn: int,
    rng: np.random.Generator,
    max_redraws: int = 100,
) -> tuple[int, int, float]:
    """Draw (n1, n0, prevalence) for a planned study of ``n`` subjects.

    Prevalence ~ Beta(1 + n1_learn, 1 + n0_learn), then n1 ~ Bin(n, prev);
    n1 in {0, n} is redrawn so both classes stay non-empty.
    """
    if n < 2:
        raise ValueError("need n >= 2 for two non-empty classes")
    prevalence = rng.beta(1 + n1_learn, 1 + n0_learn)
    for _ in range(max_redraws):
        n1 = int(rng.binomial(n, prevalence))
        if 0 < n1 < n:
            return n1, n - n1, float(prevalence)
    raise DegenerateGroupSizes(
        f"no non-degenerate split of n={n} at prevalence {prevalence:.4f} "
        f"after {max_redraws} draws"
    )


def sample_estimates(
    theta: np.ndarray,
    corr: np.ndarray,
    n: int,
    rng: np.random.Generator,
    class_label: str = DISEASED,
) -> SimilarityMatrix:
    """Similarity matrix of n rows with marginals ``theta`` and correlation ``corr``.

    Row-i.i.d. correlated Bernoulli draws; column means are the sampled
    estimates of a study of size n.
    """
    spec = BinaryTargetSpec(
        means=np.asarray(theta, dtype=float), corr=np.asarray(corr, dtype=float), n=n
    )
    return sample_correlated_binary(spec, rng, class_label)


def sample_study_matrices(
    draw: ThetaDraw, n1: int, n0: int, rng: np.random.Generator
) -> tuple[SimilarityMatrix, SimilarityMatrix]:
    """Similarity matrices for a forecast study, both classes at once.

    Equivalent to two sample_estimates calls but solves the latent
    correlations of both classes in a single vectorized pass; the hot path
    of the EFP optimizer.
    """
    s = draw.se.shape[0]
    if s == 1:
        lat_se = np.ones((1, 1))
        lat_sp = np.ones((1, 1))
    else:
        ii, jj = np.triu_indices(s, 1)
        p1 = np.concatenate([draw.se[ii], draw.sp[ii]])
        p2 = np.concatenate([draw.se[jj], draw.sp[jj]])
        rho = np.concatenate([draw.corr_se[ii, jj], draw.corr_sp[ii, jj]])
        sol = solve_latent_correlation(p1, p2, rho)
        lat_se = np.eye(s)
        lat_se[ii, jj] = sol[: ii.size]
        lat_se[jj, ii] = sol[: ii.size]
        lat_sp = np.eye(s)
        lat_sp[ii, jj] = sol[ii.size :]
        lat_sp[jj, ii] = sol[ii.size :]

    def dichotomize(means, lat, n, label):
        chol = np.linalg.cholesky(_clip_to_psd(lat) + 1e-14 * np.eye(s))
        latent = rng.standard_normal((n, s)) @ chol.T
        out = (latent > ndtri(1.0 - means)).astype(np.int8)
        return SimilarityMatrix(out, label)

    return (
        dichotomize(draw.se, lat_se, n1, "diseased"),
        dichotomize(draw.sp, lat_sp, n0, "healthy"),
    )
