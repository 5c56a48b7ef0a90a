"""Cusum tests for parameter changes in discretely observed ergodic diffusions.

The toolkit simulates diffusion paths, fits diffusion/drift parameters by
quasi-likelihood, runs three cusum change-point tests against Brownian-bridge
critical values, and orchestrates Monte Carlo size/power campaigns.
"""

__version__ = "0.1.0"

from .changepoint import (
    CusumProfile,
    InfoMatrix,
    TestReport,
    adaptive_test,
    cusum_statistic,
    diffusion_cusum_summands,
    drift_cusum_summands,
    drift_score_summands,
    info_matrix,
    run_tests,
    test_alpha,
    test_beta,
)
from .critvals import (
    CriticalValueTable,
    estimate_quantiles,
    kolmogorov_cdf,
    kolmogorov_upper_point,
    sample_bridge_sup,
)
from .errors import (
    BoundaryHitWarning,
    DegenerateRegression,
    DimensionMismatch,
    DomainError,
    DriftwatchError,
    EmptySeries,
    InsufficientSample,
    NonPositiveDefiniteDiffusion,
    NonUniformGrid,
    NumericalBlowup,
    OptimizerFailure,
    ParseError,
    SingularInformation,
)
from .estimate import (
    FitOptions,
    QmleResult,
    fit,
    fit_alpha,
    fit_beta,
    ou_misspecified_limits,
    quasi_loglik_diffusion,
    quasi_loglik_drift,
)
from .experiment import (
    CampaignResult,
    CaseSpec,
    CellResult,
    ExperimentConfig,
    ScenarioSpec,
    emit_distribution,
    emit_table,
    run_campaign,
)
from .model import (
    ChangeScenario,
    ModelSpec,
    ObservationSeries,
    ParamBox,
    ParamSpace,
    ValidationReport,
    ou_invariant_moments,
    ou_model,
    validate_model,
)
from .simulate import (
    SimulationPlan,
    default_step,
    derive_replication_seed,
    simulate_path,
)

__all__ = [
    "__version__",
    # model
    "ModelSpec",
    "ParamBox",
    "ParamSpace",
    "ObservationSeries",
    "ChangeScenario",
    "ValidationReport",
    "ou_model",
    "ou_invariant_moments",
    "validate_model",
    # simulate
    "SimulationPlan",
    "default_step",
    "derive_replication_seed",
    "simulate_path",
    # estimate
    "FitOptions",
    "QmleResult",
    "quasi_loglik_diffusion",
    "quasi_loglik_drift",
    "fit",
    "fit_alpha",
    "fit_beta",
    "ou_misspecified_limits",
    # changepoint
    "CusumProfile",
    "InfoMatrix",
    "TestReport",
    "cusum_statistic",
    "diffusion_cusum_summands",
    "drift_cusum_summands",
    "drift_score_summands",
    "info_matrix",
    "test_alpha",
    "test_beta",
    "run_tests",
    "adaptive_test",
    # critvals
    "CriticalValueTable",
    "estimate_quantiles",
    "sample_bridge_sup",
    "kolmogorov_cdf",
    "kolmogorov_upper_point",
    # experiment
    "ExperimentConfig",
    "CaseSpec",
    "ScenarioSpec",
    "CellResult",
    "CampaignResult",
    "run_campaign",
    "emit_table",
    "emit_distribution",
    # errors
    "DriftwatchError",
    "DomainError",
    "NonPositiveDefiniteDiffusion",
    "NumericalBlowup",
    "OptimizerFailure",
    "DegenerateRegression",
    "SingularInformation",
    "EmptySeries",
    "ParseError",
    "NonUniformGrid",
    "DimensionMismatch",
    "InsufficientSample",
    "BoundaryHitWarning",
]
