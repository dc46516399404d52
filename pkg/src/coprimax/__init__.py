"""coprimax: simultaneous evaluation of binary classifiers against
sensitivity/specificity co-primary endpoints."""

__version__ = "0.1.0"

from .errors import (
    CoprimaxError,
    DegenerateGroupSizes,
    DimensionMismatch,
    EmptyClass,
    EmptyModelSet,
    IndexOutOfRange,
    InfeasibleCorrelation,
    NonBinaryEntry,
    NonConvergence,
    NotPositiveSemidefinite,
    ParameterOutOfRange,
    ParseError,
    ZeroStandardError,
)
from .inference import (
    TestOutcome,
    TestStatistics,
    extend_decision,
    final_model,
    lfc_correlation,
    max_t_test,
    test_statistics,
)
from .mbeta import (
    MBetaParams,
    MomentUpdate,
    moment_matrix,
    naive_estimate,
    posterior_moments,
    posterior_update,
    regularized_estimate,
    uniform_prior,
)
from .mvnorm import (
    CorrelationMatrix,
    bvn_cdf,
    equicoordinate_quantile,
    mvn_orthant_cdf,
    nearest_correlation,
)
from .sampling import (
    BinaryTargetSpec,
    ThetaDraw,
    correlation_bounds,
    draw_theta,
    sample_correlated_binary,
    sample_group_sizes,
    sample_mbeta,
    solve_latent_correlation,
)
from .selection import (
    EfpCurve,
    ValidationData,
    optimal_efp,
    prerank,
    select_default,
    select_oracle,
    select_within_k_se,
)
from .simulate import (
    FwerResult,
    LfcScenario,
    StudyRecord,
    StudyTruth,
    aggregate,
    apply_accuracy_cap,
    lfc_parameters,
    simulate_fwer,
    simulate_study,
)
from .types import (
    CoPrimaryEstimate,
    SimilarityMatrix,
    StudyConfig,
    Threshold,
    build_similarity,
    validate_similarity,
)
