"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Monte-Carlo criteria run with the fixed seed below, so every run is
deterministic. The two large FWER scenarios use both worker processes; the
full module takes roughly 10-20 minutes on two cores.
"""

import time

import numpy as np
from scipy.stats import binom, norm

from coprimax import (
    LfcScenario,
    MomentUpdate,
    StudyConfig,
    Threshold,
    correlation_bounds,
    equicoordinate_quantile,
    final_model,
    max_t_test,
    posterior_moments,
    posterior_update,
    regularized_estimate,
    sample_correlated_binary,
    sample_mbeta,
    simulate_fwer,
    uniform_prior,
    validate_similarity,
)
from coprimax.mbeta import MBetaParams
from coprimax.sampling import BinaryTargetSpec
from coprimax.selection import (
    ValidationData,
    optimal_efp,
    select_default,
    select_within_k_se,
)
from coprimax.types import SimilarityMatrix

SEED = 20260808


def check(criterion: int, ok: bool, detail: str) -> None:
    print(f"\n[criterion {criterion:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def test_criterion_01_lfc_worst_case_fwer():
    thr = Threshold(0.9, 0.9)
    scenario = LfcScenario(
        n_models=20, theta0=thr, epsilon=0.0, prevalence=0.2,
        n_total=200, corr_strength=0.5, corr_structure="equicorrelation",
        n_sim=5000,
    )
    cfg = StudyConfig(threshold=thr, alpha=0.025, seed=SEED)
    start = time.perf_counter()
    res = simulate_fwer(scenario, cfg, workers=2)
    elapsed = time.perf_counter() - start
    ok = 0.11 <= res.fwer <= 0.17 and elapsed < 300
    check(
        1, ok,
        f"S=20 worst-case FWER = {res.fwer:.4f} (mc se {res.mc_se:.4f}), "
        f"window [0.11, 0.17], runtime {elapsed:.0f}s",
    )


def test_criterion_02_asymptotic_fwer_control():
    thr = Threshold(0.9, 0.9)
    scenario = LfcScenario(
        n_models=20, theta0=thr, epsilon=0.0, prevalence=0.2,
        n_total=20_000, corr_strength=0.5, n_sim=2000,
    )
    cfg = StudyConfig(threshold=thr, alpha=0.025, seed=SEED)
    res = simulate_fwer(scenario, cfg, workers=2)
    check(
        2, res.fwer <= 0.035,
        f"FWER at n=20000 = {res.fwer:.4f} (mc se {res.mc_se:.4f}), bound 0.035",
    )


def test_criterion_03_near_lfc_fast_decay():
    thr = Threshold(0.8, 0.8)
    scenario = LfcScenario(
        n_models=10, theta0=thr, epsilon=0.001, prevalence=0.2,
        n_total=400, corr_strength=0.5, n_sim=5000,
    )
    cfg = StudyConfig(threshold=thr, alpha=0.025, seed=SEED)
    res = simulate_fwer(scenario, cfg, workers=2)
    check(
        3, res.fwer <= 0.032,
        f"near-LFC FWER at n=400 = {res.fwer:.4f} (mc se {res.mc_se:.4f}), "
        f"bound 0.032",
    )


def test_criterion_04_single_model_reduction():
    thr = Threshold(0.8, 0.8)
    cfg = StudyConfig(threshold=thr, alpha=0.025, seed=SEED)
    z = norm.ppf(0.975)

    # critical value collapses to the univariate quantile
    est0 = regularized_estimate(
        validate_similarity(np.ones((30, 1), dtype=int), "diseased"),
        validate_similarity(np.ones((30, 1), dtype=int), "healthy"),
    )
    outcome0 = max_t_test(est0, cfg)
    c_ok = abs(outcome0.critical_value - z) <= 1e-3

    rng = np.random.default_rng(SEED)
    mismatches = 0
    for _ in range(1000):
        n1 = int(rng.integers(15, 80))
        n0 = int(rng.integers(15, 80))
        p_se, p_sp = rng.uniform(0.55, 0.95, size=2)
        q_se = validate_similarity(
            (rng.random((n1, 1)) < p_se).astype(int), "diseased"
        )
        q_sp = validate_similarity(
            (rng.random((n0, 1)) < p_sp).astype(int), "healthy"
        )
        est = regularized_estimate(q_se, q_sp)
        outcome = max_t_test(est, cfg, compute_corrected=False)
        stats = outcome.statistics
        two_z = (stats.t_se[0] > z) and (stats.t_sp[0] > z)
        if bool(outcome.rejected[0]) != two_z:
            mismatches += 1
    ok = c_ok and mismatches == 0
    check(
        4, ok,
        f"c_alpha error {abs(outcome0.critical_value - z):.2e} (tol 1e-3), "
        f"{mismatches}/1000 decisions differ from the two-z-test rule",
    )


def test_criterion_05_quantile_brackets():
    rng = np.random.default_rng(SEED)
    alpha = 0.025
    violations = 0
    worst = 0.0
    for i in range(200):
        s = int(rng.integers(2, 26))
        loadings = rng.uniform(0.05, 0.95, size=(s, 2))
        c = loadings @ loadings.T + np.diag(rng.uniform(0.05, 1.2, s))
        d = np.sqrt(np.diag(c))
        r = c / np.outer(d, d)
        np.fill_diagonal(r, 1.0)
        q = equicoordinate_quantile(
            r, 1 - alpha, tol=1e-3, seed=SEED + i, cdf_tol=2.5e-4
        )
        lo = norm.ppf(1 - alpha)
        hi = norm.ppf((1 - alpha) ** (1.0 / s))
        gap = max(lo - q, q - hi)
        worst = max(worst, gap)
        if gap > 2e-3:
            violations += 1
    indep_err = 0.0
    for s in (1, 2, 5, 10, 25):
        q = equicoordinate_quantile(np.eye(s), 1 - alpha, tol=1e-3, seed=SEED)
        indep_err = max(indep_err, abs(q - norm.ppf((1 - alpha) ** (1.0 / s))))
    ok = violations == 0 and indep_err <= 2e-3
    check(
        5, ok,
        f"bracket violations {violations}/200 (worst overshoot {worst:.2e}), "
        f"independence max error {indep_err:.2e} (tol 2e-3)",
    )


def test_criterion_06_estimator_exactness():
    post = posterior_update(uniform_prior(1), MomentUpdate(n=10, U=np.array([[7]])))
    mean, cov = posterior_moments(post)
    exact = (
        post.nu == 12.0
        and post.moment_matrix[0, 0] == 8.0
        and mean[0] == 8 / 12
        and abs(cov[0, 0] - 8 * 4 / (144 * 13)) < 1e-15
    )

    rng = np.random.default_rng(SEED)
    additive = True
    for _ in range(1000):
        s = int(rng.integers(1, 5))
        n_a, n_b = int(rng.integers(0, 25)), int(rng.integers(0, 25))
        qa = (rng.random((n_a, s)) < 0.7).astype(np.int64)
        qb = (rng.random((n_b, s)) < 0.7).astype(np.int64)
        ua = MomentUpdate(n=n_a, U=qa.T @ qa)
        ub = MomentUpdate(n=n_b, U=qb.T @ qb)
        prior = uniform_prior(s)
        seq = posterior_update(posterior_update(prior, ua), ub)
        pooled = posterior_update(prior, ua + ub)
        if seq.nu != pooled.nu or not np.array_equal(
            seq.moment_matrix, pooled.moment_matrix
        ):
            additive = False
            break
    ok = exact and additive
    check(
        6, ok,
        f"posterior mean 8/12 exact: {exact}; additivity over 1000 splits: {additive}",
    )


def _phi_coefficient_se(p: float, rho: float, n: int) -> float:
    """Delta-method standard error of the empirical binary correlation,
    from the exact multinomial cell probabilities."""
    p11 = p * p + rho * p * (1 - p)
    cells = np.array([p11, p - p11, p - p11, 1 - 2 * p + p11])

    def r_of(c):
        c11, c10, c01, _ = c
        m1, m2 = c11 + c10, c11 + c01
        return (c11 - m1 * m2) / np.sqrt(m1 * (1 - m1) * m2 * (1 - m2))

    eps = 1e-6
    grad = np.zeros(4)
    for i in range(4):
        up, down = cells.copy(), cells.copy()
        up[i] += eps
        down[i] -= eps
        grad[i] = (r_of(up) - r_of(down)) / (2 * eps)
    cov = (np.diag(cells) - np.outer(cells, cells)) / n
    return float(np.sqrt(grad @ cov @ grad))


def test_criterion_07_correlated_binary_calibration():
    rng = np.random.default_rng(SEED)
    n = 100_000
    max_mean_dev = 0.0
    max_corr_dev = 0.0
    for p in (0.8, 0.9):
        for rho in (0.0, 0.3, 0.5, 0.8):
            spec = BinaryTargetSpec(
                means=np.array([p, p]),
                corr=np.array([[1.0, rho], [rho, 1.0]]),
                n=n,
            )
            e = sample_correlated_binary(spec, rng).entries.astype(float)
            se_mean = np.sqrt(p * (1 - p) / n)
            se_corr = _phi_coefficient_se(p, rho, n)
            max_mean_dev = max(
                max_mean_dev, np.abs(e.mean(axis=0) - p).max() / se_mean
            )
            emp_rho = np.corrcoef(e.T)[0, 1]
            max_corr_dev = max(
                max_corr_dev, abs(emp_rho - rho) / max(se_corr, 1e-9)
            )
    calibrated = max_mean_dev <= 4.0 and max_corr_dev <= 4.0

    grid = np.linspace(0.05, 0.95, 20)
    rhos = np.linspace(-0.99, 0.99, 20)
    agreement = True
    for p1 in grid:
        lo, hi = correlation_bounds(np.full(20, p1), grid)
        for j, p2 in enumerate(grid):
            p11 = p1 * p2 + rhos * np.sqrt(p1 * (1 - p1) * p2 * (1 - p2))
            cells_ok = (
                (p11 >= -1e-9)
                & (p1 - p11 >= -1e-9)
                & (p2 - p11 >= -1e-9)
                & (1 - p1 - p2 + p11 >= -1e-9)
            )
            ours = (rhos >= lo[j] - 1e-9) & (rhos <= hi[j] + 1e-9)
            if not np.array_equal(cells_ok, ours):
                agreement = False
    ok = calibrated and agreement
    check(
        7, ok,
        f"max mean deviation {max_mean_dev:.2f} MC se, max corr deviation "
        f"{max_corr_dev:.2f} MC se (limit 4); feasibility oracle agreement: "
        f"{agreement}",
    )


def test_criterion_08_median_conservatism():
    thr = Threshold(0.8, 0.8)
    se_true = np.array([0.84, 0.845, 0.85, 0.855, 0.86])
    sp_true = np.array([0.86, 0.855, 0.85, 0.845, 0.84])
    corr = np.full((5, 5), 0.5)
    np.fill_diagonal(corr, 1.0)
    spec_se = BinaryTargetSpec(means=se_true, corr=corr, n=4000)
    spec_sp = BinaryTargetSpec(means=sp_true, corr=corr, n=4000)
    n_rep = 2000
    both_over = 0
    for rep in range(n_rep):
        rng = np.random.default_rng(np.random.SeedSequence([SEED, 8, rep]))
        q_se = sample_correlated_binary(spec_se, rng, "diseased")
        q_sp = sample_correlated_binary(spec_sp, rng, "healthy")
        est = regularized_estimate(q_se, q_sp)
        cfg = StudyConfig(threshold=thr, alpha=0.025, seed=SEED + rep)
        outcome = max_t_test(est, cfg, quantile_tol=2e-3)
        star = final_model(outcome, est, rule="max_t", rng=rng)
        if (
            outcome.corrected_se[star] > se_true[star]
            and outcome.corrected_sp[star] > sp_true[star]
        ):
            both_over += 1
    p_over = both_over / n_rep
    check(
        8, p_over <= 0.53,
        f"P(both corrected estimates of the final model overestimate) = "
        f"{p_over:.4f}, bound 0.53",
    )


def _mbeta_truth_params(rng, families=8, per_family=12, nu=3000.0):
    """Truth distribution mimicking tuned model pools: families of highly
    correlated near-clones whose base qualities differ across families."""
    m = families * per_family
    base = rng.uniform(0.76, 0.86, families)
    mu = np.clip(np.repeat(base, per_family) + rng.normal(0, 0.004, m), 0.72, 0.90)
    fam = np.repeat(np.arange(families), per_family)
    rho = np.where(np.equal.outer(fam, fam), 0.88, 0.40)
    sd = np.sqrt(mu * (1 - mu))
    a = nu * (np.outer(mu, mu) + rho * np.outer(sd, sd))
    np.fill_diagonal(a, nu * mu)
    return MBetaParams(nu=nu, moment_matrix=a)


def test_criterion_09_selection_rule_ordering():
    n_val, n_eval = 100, 800
    prevalence = 0.3
    s_max = int(round(np.sqrt(n_eval)))
    thr = Threshold(0.75, 0.75)
    theta_star = {"default": [], "within_1_se": [], "optimal_efp": []}
    sizes = {"within_1_se": [], "optimal_efp": []}

    for inst in range(100):
        rng = np.random.default_rng(np.random.SeedSequence([SEED, 9, inst]))
        se_true, corr_se, _ = sample_mbeta(_mbeta_truth_params(rng), rng)
        sp_true, corr_sp, _ = sample_mbeta(_mbeta_truth_params(rng), rng)
        theta_true = np.minimum(se_true, sp_true + thr.delta0)

        n1v = int(round(prevalence * n_val))
        q_se_v = sample_correlated_binary(
            BinaryTargetSpec(se_true, corr_se, n1v), rng, "diseased"
        )
        q_sp_v = sample_correlated_binary(
            BinaryTargetSpec(sp_true, corr_sp, n_val - n1v), rng, "healthy"
        )
        val = ValidationData(q_se=q_se_v, q_sp=q_sp_v)
        est_val = regularized_estimate(q_se_v, q_sp_v)
        bacc_val = 0.5 * (est_val.se_mean + est_val.sp_mean)

        # one shared evaluation dataset over all candidates
        n1e = int(round(prevalence * n_eval))
        q_se_e = sample_correlated_binary(
            BinaryTargetSpec(se_true, corr_se, n1e), rng, "diseased"
        )
        q_sp_e = sample_correlated_binary(
            BinaryTargetSpec(sp_true, corr_sp, n_eval - n1e), rng, "healthy"
        )

        def cap(sel):
            sel = np.asarray(sel, dtype=int)
            if sel.size > s_max:
                keep = np.argsort(-bacc_val[sel - 1], kind="stable")[:s_max]
                sel = sel[np.sort(keep)]
            return sel

        cfg = StudyConfig(threshold=thr, alpha=0.025, n_eval=n_eval, seed=inst)
        curve = optimal_efp(val, cfg, rng=rng)
        chosen = {
            "default": cap(select_default(val)),
            "within_1_se": cap(select_within_k_se(val, 1.0)),
            "optimal_efp": curve.selected(),
        }
        sizes["within_1_se"].append(len(chosen["within_1_se"]))
        sizes["optimal_efp"].append(len(chosen["optimal_efp"]))

        for rule, sel in chosen.items():
            cols = np.asarray(sel) - 1
            est = regularized_estimate(
                SimilarityMatrix(q_se_e.entries[:, cols], "diseased"),
                SimilarityMatrix(q_sp_e.entries[:, cols], "healthy"),
            )
            outcome = max_t_test(
                est, cfg, compute_corrected=False, quantile_tol=2e-3
            )
            star = final_model(outcome, est, rule="max_t", rng=rng)
            theta_star[rule].append(theta_true[cols[star]])

    means = {rule: float(np.mean(v)) for rule, v in theta_star.items()}
    gap_oe_w1 = means["optimal_efp"] - means["within_1_se"]
    gap_w1_def = means["within_1_se"] - means["default"]
    mean_sizes = {rule: float(np.mean(v)) for rule, v in sizes.items()}
    ok = (
        gap_oe_w1 >= -0.002
        and gap_w1_def >= -0.002
        and mean_sizes["within_1_se"] > mean_sizes["optimal_efp"]
    )
    check(
        9, ok,
        f"mean final performance: optimal_efp {means['optimal_efp']:.4f} >= "
        f"within_1_se {means['within_1_se']:.4f} >= default "
        f"{means['default']:.4f} (gaps {gap_oe_w1:+.4f}, {gap_w1_def:+.4f}, "
        f"slack -0.002); mean sizes within_1_se {mean_sizes['within_1_se']:.2f}"
        f" > optimal_efp {mean_sizes['optimal_efp']:.2f}",
    )


def test_criterion_10_small_instance_brute_force():
    thr = Threshold(0.8, 0.8)
    n = 4

    def decision(u_se: int, u_sp: int) -> bool:
        col_se = np.zeros((n, 1), dtype=int)
        col_se[:u_se] = 1
        col_sp = np.zeros((n, 1), dtype=int)
        col_sp[:u_sp] = 1
        q_se = validate_similarity(
            np.hstack([col_se, np.ones((n, 1), dtype=int)]), "diseased"
        )
        q_sp = validate_similarity(
            np.hstack([np.ones((n, 1), dtype=int), col_sp]), "healthy"
        )
        est = regularized_estimate(q_se, q_sp)
        cfg = StudyConfig(
            threshold=thr, alpha=0.025, seed=SEED + 100 * u_se + u_sp
        )
        return bool(max_t_test(est, cfg, compute_corrected=False).any_rejected)

    table = np.array([[decision(a, b) for b in range(n + 1)] for a in range(n + 1)])

    # exhaustive enumeration: weight every outcome by its probability
    weights = binom.pmf(np.arange(n + 1), n, 0.8)
    exact = float(weights @ table @ weights)

    rng = np.random.default_rng(SEED)
    draws = rng.binomial(n, 0.8, size=(1_000_000, 2))
    mc = float(table[draws[:, 0], draws[:, 1]].mean())
    check(
        10, abs(exact - mc) <= 1e-3,
        f"enumerated FWER {exact:.6f} vs Monte-Carlo {mc:.6f} "
        f"(|diff| = {abs(exact - mc):.2e}, tol 1e-3)",
    )
