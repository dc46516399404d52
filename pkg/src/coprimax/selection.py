"""Pre-study model-subset selection rules.

The heuristic rules pick by validation balanced accuracy (single best,
or everything within k standard errors of the best). The optimal-EFP rule
simulates the evaluation study instead: it turns the validation data into a
generative posterior over true performances, repeatedly forecasts the study
outcome, and keeps the number of models that maximizes the expected true
performance of the finally chosen model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mbeta, sampling
from .errors import EmptyClass
from .inference import test_statistics
from .types import SimilarityMatrix, StudyConfig, Threshold


@dataclass(frozen=True)
class ValidationData:
    """Hold-out validation similarity matrices for all candidate models."""

    q_se: SimilarityMatrix
    q_sp: SimilarityMatrix

    def __post_init__(self):
        if self.q_se.n_models != self.q_sp.n_models:
            raise ValueError("per-class model counts differ")

    @property
    def n_models(self) -> int:
        return self.q_se.n_models


@dataclass(frozen=True)
class EfpCurve:
    """Estimated expected final performance per evaluated-subset size.

    ``order`` maps curve positions to 1-based candidate indices in rank
    order; selecting ``s_star`` models means taking ``order[:s_star]``.
    """

    efp: np.ndarray
    se: np.ndarray
    s_star: int
    iterations_used: int
    order: np.ndarray
    n_clipped: int = 0

    def selected(self) -> np.ndarray:
        return self.order[: self.s_star]


def _validation_estimate(val: ValidationData):
    return mbeta.regularized_estimate(val.q_se, val.q_sp)


def _balanced_accuracy(val: ValidationData) -> tuple[np.ndarray, np.ndarray]:
    est = _validation_estimate(val)
    bacc = 0.5 * (est.se_mean + est.sp_mean)
    se = np.sqrt(0.25 * np.diag(est.se_cov) + 0.25 * np.diag(est.sp_cov))
    return bacc, se


def prerank(val: ValidationData, thr: Threshold, s_max: int) -> np.ndarray:
    """Rank models by validation evidence min(t_se, t_sp), descending.

    Ties keep the original candidate order. Returns 1-based indices,
    truncated to ``s_max``.
    """
    if s_max < 1:
        raise ValueError("s_max must be at least 1")
    stats = test_statistics(_validation_estimate(val), thr)
    order = np.argsort(-stats.t_min, kind="stable")
    return (order[:s_max] + 1).astype(int)


def select_default(val: ValidationData) -> np.ndarray:
    """Best validation balanced accuracy; ties are all included (1-based)."""
    bacc, _ = _balanced_accuracy(val)
    return np.flatnonzero(bacc == bacc.max()) + 1


def select_within_k_se(val: ValidationData, k: float = 1.0) -> np.ndarray:
    """All models within k standard errors of the best validation model.

    The cut-off is max bAcc minus k times the standard error of the best
    model; k=0 reduces to select_default. Returns 1-based indices.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    bacc, se = _balanced_accuracy(val)
    best = int(np.argmax(bacc))
    return np.flatnonzero(bacc >= bacc[best] - k * se[best]) + 1


def select_oracle(true_se, true_sp, thr: Threshold) -> np.ndarray:
    """All maximizers of min(se, sp + delta0) given the true performances."""
    se = np.asarray(true_se, dtype=float)
    sp = np.asarray(true_sp, dtype=float)
    score = np.minimum(se, sp + thr.delta0)
    return np.flatnonzero(score == score.max()) + 1


def subset_utility(s: int, theta: np.ndarray, cost: float) -> float:
    """Diagnostic utility of evaluating the first s models: best selected
    performance minus best overall, minus a per-model cost."""
    theta = np.asarray(theta, dtype=float)
    return float(theta[:s].max() - theta.max() - cost * s)


def optimal_efp(
    val: ValidationData,
    cfg: StudyConfig,
    s_max: int | None = None,
    max_iter: int = 250,
    num_tol: float = 0.001,
    rng: np.random.Generator | None = None,
    s_star_rule: str = "one_se",
    n1_learn: int | None = None,
    n0_learn: int | None = None,
) -> EfpCurve:
    """Monte-Carlo optimization of the expected final model performance.

    Models are preranked by validation evidence and truncated to ``s_max``
    (default: planned evaluation size rounded to its square root). Each
    iteration draws true performances from the validation posterior, draws a
    forecast evaluation study of ``cfg.n_eval`` subjects, picks the final
    model among the first S for every S, and records its true performance.
    Column means estimate EFP(S); iteration stops at ``max_iter`` or once
    the running standard error at the current optimum drops below
    ``num_tol``.

    ``s_star_rule``: "one_se" picks the smallest S whose EFP is within one
    standard error of the maximum, "argmax" picks the maximizer itself.

    The prevalence prior uses learning-data class counts when given,
    otherwise the validation counts.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if s_star_rule not in ("one_se", "argmax"):
        raise ValueError(f"unknown s_star rule {s_star_rule!r}")
    if cfg.n_eval < 2:
        raise ValueError("cfg.n_eval must be set for EFP optimization")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if s_max is None:
        s_max = int(round(np.sqrt(cfg.n_eval)))
    s_max = max(1, min(s_max, val.n_models))
    if val.q_se.n == 0 or val.q_sp.n == 0:
        raise EmptyClass("EFP optimization needs validation rows for both classes")

    order = prerank(val, cfg.threshold, s_max)
    cols = order - 1
    q_se = SimilarityMatrix(val.q_se.entries[:, cols], val.q_se.class_label)
    q_sp = SimilarityMatrix(val.q_sp.entries[:, cols], val.q_sp.class_label)

    post_se = mbeta.posterior_update(mbeta.uniform_prior(s_max), mbeta.moment_matrix(q_se))
    post_sp = mbeta.posterior_update(mbeta.uniform_prior(s_max), mbeta.moment_matrix(q_sp))
    n1_l = val.q_se.n if n1_learn is None else n1_learn
    n0_l = val.q_sp.n if n0_learn is None else n0_learn

    delta0 = cfg.threshold.delta0
    results = np.empty((max_iter, s_max))
    n_clipped = 0
    iterations = 0
    eps = np.inf
    s_star = 1
    idx = np.arange(s_max)

    while iterations < max_iter and eps > num_tol:
        draw = sampling.draw_theta(post_se, post_sp, rng)
        n_clipped += draw.n_clipped
        truth = np.minimum(draw.se, draw.sp + delta0)

        n1, n0, _ = sampling.sample_group_sizes(cfg.n_eval, n1_l, n0_l, rng)
        sim_se, sim_sp = sampling.sample_study_matrices(draw, n1, n0, rng)
        est = mbeta.regularized_estimate(sim_se, sim_sp)
        t_min = test_statistics(est, cfg.threshold).t_min

        # final model among the first S, for every S at once; ties keep
        # the better-ranked model, like np.argmax on each prefix
        best = np.maximum.accumulate(t_min)
        prev = np.concatenate(([-np.inf], best[:-1]))
        m_star = np.maximum.accumulate(np.where(t_min > prev, idx, 0))
        results[iterations] = truth[m_star]

        iterations += 1
        efp = results[:iterations].mean(axis=0)
        if iterations > 1:
            col_se = results[:iterations].std(axis=0, ddof=1) / np.sqrt(iterations)
        else:
            col_se = np.full(s_max, np.inf)
        s_star = _pick_s_star(efp, col_se, s_star_rule)
        eps = col_se[s_star - 1]

    efp = results[:iterations].mean(axis=0)
    if iterations > 1:
        col_se = results[:iterations].std(axis=0, ddof=1) / np.sqrt(iterations)
    else:
        col_se = np.zeros(s_max)
    s_star = _pick_s_star(efp, col_se, s_star_rule)
    return EfpCurve(
        efp=efp,
        se=col_se,
        s_star=int(s_star),
        iterations_used=iterations,
        order=order,
        n_clipped=n_clipped,
    )


def _pick_s_star(efp: np.ndarray, col_se: np.ndarray, rule: str) -> int:
    best = int(np.argmax(efp))
    if rule == "argmax":
        return best + 1
    cut = efp[best] - (col_se[best] if np.isfinite(col_se[best]) else 0.0)
    return int(np.flatnonzero(efp >= cut)[0]) + 1
