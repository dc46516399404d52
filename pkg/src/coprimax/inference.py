"""Simultaneous max-min-T test for co-primary sensitivity/specificity endpoints.

Each model m gets two standardized statistics (one per endpoint); the model
statistic is their minimum. All hypotheses share a single critical value,
the equicoordinate multivariate-normal quantile of a worst-case projected
correlation matrix: rows of models whose sensitivity margin is the smaller
one are taken from the sensitivity correlation, the others from the
specificity correlation, and cross terms vanish because the two classes are
independent samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import mvnorm
from .errors import IndexOutOfRange, ZeroStandardError
from .mvnorm import CorrelationMatrix
from .types import CoPrimaryEstimate, StudyConfig, Threshold


@dataclass(frozen=True)
class TestStatistics:
    """Per-model statistics: t_se, t_sp, their minimum, and the branch flags.

    ``b_hat[m]`` is 1 when the sensitivity margin (se_mean - se0) is the
    smaller of the two margins; exact ties take the sensitivity branch.
    """

    t_se: np.ndarray
    t_sp: np.ndarray
    t_min: np.ndarray
    b_hat: np.ndarray


@dataclass(frozen=True)
class TestOutcome:
    """Decisions, shared critical value, one-sided bounds, corrected estimates."""

    statistics: TestStatistics
    critical_value: float
    rejected: np.ndarray
    ci_lower_se: np.ndarray
    ci_lower_sp: np.ndarray
    corrected_se: np.ndarray
    corrected_sp: np.ndarray
    r_hat: CorrelationMatrix

    @property
    def any_rejected(self) -> bool:
        return bool(self.rejected.any())


def _stderr(cov: np.ndarray, endpoint: str) -> np.ndarray:
    var = np.diag(cov)
    if np.any(var <= 0):
        raise ZeroStandardError(
            f"zero {endpoint} variance; use regularized estimates for inference"
        )
    return np.sqrt(var)


def test_statistics(est: CoPrimaryEstimate, thr: Threshold) -> TestStatistics:
    """Standardized margins per endpoint and their elementwise minimum."""
    se_sd = _stderr(est.se_cov, "sensitivity")
    sp_sd = _stderr(est.sp_cov, "specificity")
    t_se = (est.se_mean - thr.se0) / se_sd
    t_sp = (est.sp_mean - thr.sp0) / sp_sd
    b_hat = ((est.se_mean - thr.se0) <= (est.sp_mean - thr.sp0)).astype(np.int8)
    return TestStatistics(
        t_se=t_se, t_sp=t_sp, t_min=np.minimum(t_se, t_sp), b_hat=b_hat
    )


def lfc_correlation(est: CoPrimaryEstimate, stats: TestStatistics) -> CorrelationMatrix:
    """Worst-case projected correlation of the minimum statistics.

    Entry (m1, m2) comes from the sensitivity correlation when both models
    sit on the sensitivity branch, from the specificity correlation when
    both sit on the specificity branch, and is zero across branches.
    """
    r_se = mvnorm.cov_to_corr(est.se_cov)
    r_sp = mvnorm.cov_to_corr(est.sp_cov)
    b = stats.b_hat.astype(float)
    mixed = np.outer(b, b) * r_se + np.outer(1.0 - b, 1.0 - b) * r_sp
    np.fill_diagonal(mixed, 1.0)
    return CorrelationMatrix.from_matrix(mixed)


def max_t_test(
    est: CoPrimaryEstimate,
    cfg: StudyConfig,
    compute_corrected: bool = True,
    quantile_tol: float = 1e-3,
) -> TestOutcome:
    """Run the simultaneous test at level ``cfg.alpha`` (one-sided).

    Model m is positively evaluated iff min(t_se, t_sp) exceeds the shared
    critical value. One-sided lower confidence bounds are
    estimate - c * stderr, clamped to [0, 1); corrected point estimates are
    the same bounds recomputed with the 0.5-level critical value, which
    bounds the probability of jointly overestimating both endpoints of any
    model by 50%. Set ``compute_corrected=False`` to skip the second
    quantile when only decisions are needed.
    """
    stats = test_statistics(est, cfg.threshold)
    r_hat = lfc_correlation(est, stats)
    c_alpha = mvnorm.equicoordinate_quantile(
        r_hat,
        1.0 - cfg.alpha,
        tol=quantile_tol,
        seed=cfg.seed,
        cdf_tol=cfg.mc_tolerance,
    )
    rejected = (stats.t_min > c_alpha).astype(np.int8)
    se_sd = np.sqrt(np.diag(est.se_cov))
    sp_sd = np.sqrt(np.diag(est.sp_cov))
    ci_lower_se = np.clip(est.se_mean - c_alpha * se_sd, 0.0, 1.0)
    ci_lower_sp = np.clip(est.sp_mean - c_alpha * sp_sd, 0.0, 1.0)
    if compute_corrected:
        c_half = mvnorm.equicoordinate_quantile(
            r_hat,
            0.5,
            tol=quantile_tol,
            seed=cfg.seed + 1,
            cdf_tol=cfg.mc_tolerance,
        )
        corrected_se = np.clip(est.se_mean - c_half * se_sd, 0.0, 1.0)
        corrected_sp = np.clip(est.sp_mean - c_half * sp_sd, 0.0, 1.0)
    else:
        corrected_se = est.se_mean.copy()
        corrected_sp = est.sp_mean.copy()
    return TestOutcome(
        statistics=stats,
        critical_value=float(c_alpha),
        rejected=rejected,
        ci_lower_se=ci_lower_se,
        ci_lower_sp=ci_lower_sp,
        corrected_se=corrected_se,
        corrected_sp=corrected_sp,
        r_hat=r_hat,
    )


def critical_value_bracket(alpha: float, n_models: int) -> tuple[float, float]:
    """Deterministic bounds on the shared critical value for any correlation.

    [Phi^-1(1 - alpha), Phi^-1(1 - alpha / S)]: perfect correlation below,
    Bonferroni above. Decisions with statistics outside the bracket do not
    depend on the exact quantile.
    """
    return float(ndtri(1.0 - alpha)), float(ndtri(1.0 - alpha / n_models))


def extend_decision(rejected: np.ndarray, selected, total_models: int) -> np.ndarray:
    """Embed decisions for the evaluated subset into the full candidate set.

    ``selected`` holds 1-based candidate indices in evaluation order;
    everything outside the evaluated subset is a non-rejection.
    """
    sel = np.asarray(list(selected), dtype=int)
    if sel.size != np.asarray(rejected).size:
        raise IndexOutOfRange("selected index count does not match decisions")
    if sel.size and (sel.min() < 1 or sel.max() > total_models):
        raise IndexOutOfRange(
            f"selected indices must lie in 1..{total_models}, got {sel.tolist()}"
        )
    full = np.zeros(total_models, dtype=np.int8)
    full[sel - 1] = np.asarray(rejected, dtype=np.int8)
    return full


def final_model(
    outcome: TestOutcome,
    est: CoPrimaryEstimate,
    rule: str = "max_t",
    weight: float = 0.5,
    rng: np.random.Generator | None = None,
) -> int | None:
    """Pick the final model (0-based index within the evaluated subset).

    ``max_t`` takes the argmax of the minimum statistic over all evaluated
    models, whether or not anything was rejected. ``max_weighted`` takes the
    argmax of weight*se + (1-weight)*sp restricted to positively evaluated
    models and returns None when there are none. Ties break uniformly at
    random with the supplied generator.
    """
    if rule == "max_t":
        scores = outcome.statistics.t_min
        pool = np.arange(scores.shape[0])
    elif rule == "max_weighted":
        if not 0.0 < weight < 1.0:
            raise ValueError("weight must lie in (0, 1)")
        pool = np.flatnonzero(outcome.rejected)
        if pool.size == 0:
            return None
        scores = weight * est.se_mean + (1.0 - weight) * est.sp_mean
    else:
        raise ValueError(f"unknown final-model rule {rule!r}")
    best = scores[pool].max()
    ties = pool[scores[pool] == best]
    if ties.size == 1:
        return int(ties[0])
    if rng is None:
        rng = np.random.default_rng(0)
    return int(rng.choice(ties))
