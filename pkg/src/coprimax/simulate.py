"""Monte-Carlo experiments: worst-case FWER estimation and full study replays.

The least-favorable configuration puts every model on the null boundary in
one endpoint and at one in the other. Per replicate, a fresh random branch
assignment is drawn, similarity matrices are generated with the scenario's
correlation among the boundary columns, and the simultaneous test runs on
regularized estimates.

Replicates derive their generators from (seed, replicate index), so results
are identical at any worker count. Rejection decisions are screened against
the deterministic critical-value bracket first: a quantile is only computed
for replicates whose statistics actually land between the perfect-
correlation and Bonferroni bounds, which cannot change any decision.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, replace

import numpy as np

from . import mbeta, sampling
from .errors import EmptyClass, ParameterOutOfRange
from .inference import (
    critical_value_bracket,
    extend_decision,
    final_model,
    lfc_correlation,
    max_t_test,
    test_statistics,
)
from .mvnorm import mvn_orthant_cdf
from .selection import (
    ValidationData,
    optimal_efp,
    select_default,
    select_oracle,
    select_within_k_se,
)
from .types import StudyConfig, Threshold

_SIM_QUANTILE_TOL = 2e-3
_SIM_CDF_TOL = 4e-4

CORR_STRUCTURES = ("equicorrelation", "independence", "autocorrelation")


@dataclass(frozen=True)
class LfcScenario:
    """One worst-case (or near-worst-case) data-generating configuration."""

    n_models: int
    theta0: Threshold
    epsilon: float = 0.0
    prevalence: float = 0.2
    n_total: int = 200
    corr_strength: float = 0.5
    corr_structure: str = "equicorrelation"
    acc_cap: float | None = None
    n_sim: int = 10_000

    def __post_init__(self):
        if self.corr_structure not in CORR_STRUCTURES:
            raise ValueError(f"unknown correlation structure {self.corr_structure!r}")
        if self.epsilon < 0:
            raise ParameterOutOfRange("epsilon must be non-negative")
        if self.epsilon * (self.n_models - 1) >= min(self.theta0.se0, self.theta0.sp0):
            raise ParameterOutOfRange(
                "epsilon too large: boundary parameters would leave (0, 1)"
            )
        if not (0.0 < self.prevalence < 1.0):
            raise ParameterOutOfRange("prevalence must lie in (0, 1)")
        if self.acc_cap is not None and not (0.0 < self.acc_cap <= 1.0):
            raise ParameterOutOfRange("acc_cap must lie in (0, 1]")


@dataclass(frozen=True)
class FwerResult:
    fwer: float
    mc_se: float
    n_sim: int
    rejections_any: int


def lfc_parameters(
    n_models: int, theta0: Threshold, epsilon: float, b: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Boundary parameters for branch vector b (1 = sensitivity branch).

    Model m (1-based) gets Se = se0 - (m-1)*eps, Sp = 1 on the sensitivity
    branch, and Se = 1, Sp = sp0 - (S-m)*eps otherwise.
    """
    b = np.asarray(b)
    if b.shape != (n_models,) or not np.isin(b, (0, 1)).all():
        raise ValueError("b must be a binary vector of length n_models")
    m = np.arange(1, n_models + 1, dtype=float)
    se = np.where(b == 1, theta0.se0 - (m - 1) * epsilon, 1.0)
    sp = np.where(b == 1, 1.0, theta0.sp0 - (n_models - m) * epsilon)
    if np.any(se <= 0) or np.any(sp <= 0) or np.any(se > 1) or np.any(sp > 1):
        raise ParameterOutOfRange("boundary parameters left (0, 1]")
    return se, sp


def apply_accuracy_cap(
    se: np.ndarray,
    sp: np.ndarray,
    b: np.ndarray,
    prevalence: float,
    cap: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Lower the degenerate endpoint of each model so overall accuracy <= cap.

    Only components at 1 move; the boundary endpoints stay untouched, so the
    null configuration is preserved.
    """
    se = np.asarray(se, dtype=float).copy()
    sp = np.asarray(sp, dtype=float).copy()
    acc = prevalence * se + (1.0 - prevalence) * sp
    over = acc > cap
    sens_branch = np.asarray(b) == 1
    fix_sp = over & sens_branch
    fix_se = over & ~sens_branch
    sp[fix_sp] = (cap - prevalence * se[fix_sp]) / (1.0 - prevalence)
    se[fix_se] = (cap - (1.0 - prevalence) * sp[fix_se]) / prevalence
    if np.any(se <= 0) or np.any(sp <= 0):
        raise ParameterOutOfRange("accuracy cap drove a parameter to zero")
    return se, sp


def _structure_matrix(k: int, structure: str, strength: float) -> np.ndarray:
    if structure == "independence" or k == 0:
        return np.eye(k)
    if structure == "equicorrelation":
        out = np.full((k, k), strength)
    else:  # autocorrelation
        idx = np.arange(k)
        out = strength ** np.abs(np.subtract.outer(idx, idx))
    np.fill_diagonal(out, 1.0)
    return out


def _class_spec(
    means: np.ndarray,
    boundary: np.ndarray,
    n: int,
    structure: str,
    strength: float,
) -> sampling.BinaryTargetSpec:
    """Target spec for one class: correlation among the boundary columns,
    capped columns independent."""
    live = means < 1.0
    k = int(live.sum())
    corr = np.eye(k)
    pos_in_live = np.cumsum(live) - 1
    idx = pos_in_live[boundary & live]
    sub = _structure_matrix(idx.size, structure, strength)
    corr[np.ix_(idx, idx)] = sub
    return sampling.BinaryTargetSpec(means=means, corr=corr, n=n)


def _draw_branches(n_models: int, rng: np.random.Generator) -> np.ndarray:
    if n_models == 1:
        return np.ones(1, dtype=np.int8)
    b = np.zeros(n_models, dtype=np.int8)
    b[rng.permutation(n_models)[: n_models // 2]] = 1
    return b


def _fwer_replicate(scenario: LfcScenario, cfg: StudyConfig, rep: int) -> bool:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2025, rep]))
    s = scenario.n_models
    thr = cfg.threshold
    b = _draw_branches(s, rng)
    se, sp = lfc_parameters(s, thr, scenario.epsilon, b)
    if scenario.acc_cap is not None:
        se, sp = apply_accuracy_cap(se, sp, b, scenario.prevalence, scenario.acc_cap)

    n1 = int(round(scenario.prevalence * scenario.n_total))
    n0 = scenario.n_total - n1
    spec_se = _class_spec(
        se, b == 1, n1, scenario.corr_structure, scenario.corr_strength
    )
    spec_sp = _class_spec(
        sp, b == 0, n0, scenario.corr_structure, scenario.corr_strength
    )
    q_se = sampling.sample_correlated_binary(spec_se, rng, "diseased")
    q_sp = sampling.sample_correlated_binary(spec_sp, rng, "healthy")

    est = mbeta.regularized_estimate(q_se, q_sp)
    stats = test_statistics(est, thr)
    null = (se <= thr.se0 + 1e-12) | (sp <= thr.sp0 + 1e-12)
    if not null.any():
        return False
    t_max = stats.t_min[null].max()
    c_lo, c_hi = critical_value_bracket(cfg.alpha, s)
    if t_max <= c_lo:
        return False
    if t_max > c_hi:
        return True
    # t_max > c_alpha iff P(all <= t_max) > 1 - alpha: one CDF evaluation
    # decides, no quantile search needed
    r_hat = lfc_correlation(est, stats)
    prob, _ = mvn_orthant_cdf(
        float(t_max), r_hat, tol=_SIM_CDF_TOL, seed=cfg.seed * 1_000_003 + rep
    )
    return prob > 1.0 - cfg.alpha


def _fwer_chunk(args) -> int:
    scenario, cfg, start, stop = args
    return sum(_fwer_replicate(scenario, cfg, rep) for rep in range(start, stop))


def simulate_fwer(
    scenario: LfcScenario, cfg: StudyConfig, workers: int = 1
) -> FwerResult:
    """Estimate the family-wise error rate under the scenario.

    Each replicate redraws the branch vector (|b| = floor(S/2); b = (1) for a
    single model), regenerates both similarity matrices, and records whether
    any true-null hypothesis is rejected.
    """
    if scenario.n_sim < 1:
        raise ValueError("n_sim must be at least 1")
    n_sim = scenario.n_sim
    if workers > 1:
        chunks = []
        bounds = np.linspace(0, n_sim, workers * 4 + 1).astype(int)
        for a, z in zip(bounds[:-1], bounds[1:]):
            if z > a:
                chunks.append((scenario, cfg, int(a), int(z)))
        with multiprocessing.get_context("fork").Pool(workers) as pool:
            hits = sum(pool.map(_fwer_chunk, chunks))
    else:
        hits = _fwer_chunk((scenario, cfg, 0, n_sim))
    fwer = hits / n_sim
    return FwerResult(
        fwer=fwer,
        mc_se=float(np.sqrt(fwer * (1.0 - fwer) / n_sim)),
        n_sim=n_sim,
        rejections_any=int(hits),
    )


# ---------------------------------------------------------------------------
# End-to-end study simulation: selection -> evaluation -> final model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StudyTruth:
    """True per-model performances and correlation structure, both classes."""

    se: np.ndarray
    sp: np.ndarray
    corr_se: np.ndarray
    corr_sp: np.ndarray

    @property
    def n_models(self) -> int:
        return self.se.shape[0]

    def theta(self, delta0: float) -> np.ndarray:
        return np.minimum(self.se, self.sp + delta0)


@dataclass(frozen=True)
class StudyRecord:
    """One full pipeline replicate."""

    selected: np.ndarray
    n_selected: int
    rejected_full: np.ndarray
    m_star: int
    rejected_star: bool
    star_is_null: bool
    any_true_null_rejected: bool
    theta_star: float
    theta_best: float
    se_star: float
    sp_star: float
    corrected_se_star: float
    corrected_sp_star: float
    delta: float


def simulate_study(
    truth: StudyTruth,
    rule: str,
    cfg: StudyConfig,
    n_val: int,
    prevalence: float,
    rng: np.random.Generator,
    s_max: int | None = None,
    within_k: float = 1.0,
    efp_max_iter: int = 250,
) -> StudyRecord:
    """Replay one study: validation data, selection, evaluation, final model.

    The final model is the evaluated model with the largest minimum
    statistic; its corrected estimates and true performances are recorded
    for bias and overestimation metrics.
    """
    m_total = truth.n_models
    delta0 = cfg.threshold.delta0
    n1v = int(round(prevalence * n_val))
    n0v = n_val - n1v
    if min(n1v, n0v) < 1:
        raise EmptyClass("validation split left an empty class")
    q_se = sampling.sample_estimates(truth.se, truth.corr_se, n1v, rng, "diseased")
    q_sp = sampling.sample_estimates(truth.sp, truth.corr_sp, n0v, rng, "healthy")
    val = ValidationData(q_se=q_se, q_sp=q_sp)

    if rule == "default":
        selected = select_default(val)
    elif rule == "within_k_se":
        selected = select_within_k_se(val, within_k)
    elif rule == "oracle":
        selected = select_oracle(truth.se, truth.sp, cfg.threshold)
    elif rule == "optimal_efp":
        curve = optimal_efp(
            val, cfg, s_max=s_max, max_iter=efp_max_iter, rng=rng
        )
        selected = curve.selected()
    else:
        raise ValueError(f"unknown selection rule {rule!r}")
    selected = np.asarray(selected, dtype=int)
    if s_max is not None and selected.size > s_max:
        # cap at the s_max best validation models, keeping selection order
        est_val = mbeta.regularized_estimate(val.q_se, val.q_sp)
        bacc = 0.5 * (est_val.se_mean + est_val.sp_mean)
        keep = np.argsort(-bacc[selected - 1], kind="stable")[:s_max]
        selected = selected[np.sort(keep)]

    cols = np.asarray(selected) - 1
    n1e = int(round(prevalence * cfg.n_eval))
    n0e = cfg.n_eval - n1e
    if min(n1e, n0e) < 1:
        raise EmptyClass("evaluation split left an empty class")
    e_se = sampling.sample_estimates(
        truth.se[cols], truth.corr_se[np.ix_(cols, cols)], n1e, rng, "diseased"
    )
    e_sp = sampling.sample_estimates(
        truth.sp[cols], truth.corr_sp[np.ix_(cols, cols)], n0e, rng, "healthy"
    )
    est = mbeta.regularized_estimate(e_se, e_sp)
    rep_seed = int(rng.integers(2**31))
    outcome = max_t_test(
        est,
        replace(cfg, seed=rep_seed),
        quantile_tol=_SIM_QUANTILE_TOL,
    )
    local_star = final_model(outcome, est, rule="max_t", rng=rng)
    m_star = int(selected[local_star])

    theta = truth.theta(delta0)
    theta0 = min(cfg.threshold.se0, cfg.threshold.sp0 + delta0)
    rejected_full = extend_decision(outcome.rejected, selected, m_total)
    null_full = theta <= theta0 + 1e-12
    return StudyRecord(
        selected=np.asarray(selected, dtype=int),
        n_selected=int(len(selected)),
        rejected_full=rejected_full,
        m_star=m_star,
        rejected_star=bool(outcome.rejected[local_star]),
        star_is_null=bool(null_full[m_star - 1]),
        any_true_null_rejected=bool((rejected_full.astype(bool) & null_full).any()),
        theta_star=float(theta[m_star - 1]),
        theta_best=float(theta.max()),
        se_star=float(truth.se[m_star - 1]),
        sp_star=float(truth.sp[m_star - 1]),
        corrected_se_star=float(outcome.corrected_se[local_star]),
        corrected_sp_star=float(outcome.corrected_sp[local_star]),
        delta=float(theta.max() - theta0),
    )


def aggregate(records, tau: float | None = None, delta0: float = 0.0) -> dict:
    """Summary metrics over study records, each as (value, mc standard error).

    ``fwer_final_true_null`` is the rejection rate among replicates whose
    final model is a true null (an upper-bound variant of the conditional
    error rate); ``fwer_any_true_null`` counts any true-null rejection.
    """
    records = list(records)
    if not records:
        raise EmptyClass("no records to aggregate")

    def mean_se(x):
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            return float("nan"), float("nan")
        se = x.std(ddof=1) / np.sqrt(x.size) if x.size > 1 else float("nan")
        return float(x.mean()), float(se)

    theta_star = np.array([r.theta_star for r in records])
    corrected_star = np.array(
        [min(r.corrected_se_star, r.corrected_sp_star + delta0) for r in records]
    )
    over_se = np.array([r.corrected_se_star > r.se_star for r in records])
    over_sp = np.array([r.corrected_sp_star > r.sp_star for r in records])
    rejected_star = np.array([r.rejected_star for r in records])
    star_is_null = np.array([r.star_is_null for r in records])
    mae2 = np.array(
        [
            0.5
            * (
                abs(r.corrected_se_star - r.se_star)
                + abs(r.corrected_sp_star - r.sp_star)
            )
            for r in records
        ]
    )

    out = {
        "e_theta_star": mean_se(theta_star),
        "rr": mean_se(rejected_star.astype(float)),
        "bias": mean_se(corrected_star - theta_star),
        "mae2": mean_se(mae2),
        "p_overestimate_either": mean_se((over_se | over_sp).astype(float)),
        "p_overestimate_both": mean_se((over_se & over_sp).astype(float)),
        "e_n_selected": mean_se([r.n_selected for r in records]),
        "fwer_any_true_null": mean_se(
            [float(r.any_true_null_rejected) for r in records]
        ),
        "fwer_final_true_null": mean_se(rejected_star[star_is_null].astype(float)),
    }
    if tau is not None:
        out["p_theta_star_gt_tau"] = mean_se((theta_star > tau).astype(float))
    return out
