"""Numerical laboratory for heat-kernel estimates of stable-like processes.

The package computes transition densities of rotationally invariant stable,
truncated stable, and Levy-driven Ornstein-Uhlenbeck processes, simulates
their increments reproducibly, and empirically verifies Harnack-type
inequalities (power Harnack, log-Harnack, density ratio bounds) while
fitting the existential constants those inequalities only assert to exist.
"""

__version__ = "0.1.0"

from .levy_core import (
    DominatingLevySpec,
    DominationError,
    OUSpec,
    QuadratureError,
    ResidualLevyMeasure,
    StableSpec,
    TruncatedStableSpec,
    compute_c0,
    compute_mu_hat,
    compute_sigma,
    describe_spec,
    split_levy_measure,
    symbol,
    symbol_radial,
    time_integrated_symbol,
)
from .sampling import (
    CalibrationError,
    JumpDecomposition,
    SeedSpec,
    TailMassError,
    default_small_jump_cutoff,
    empirical_cf,
    make_jump_decomposition,
    sample_increment,
    sample_residual,
    sample_rot_stable,
    sample_sym_stable_1d,
    sample_truncated_stable,
    small_jump_cf_error_bound,
)
from .density import (
    BoundConstants,
    DensityEstimateError,
    DensityGrid,
    TruncatedBoundConstants,
    check_truncated_bounds,
    estimate_bound_constants,
    grid_interp,
    grid_mass,
    kde_1d,
    phi_envelope,
    stable_cdf_1d,
    stable_density,
    stable_density_grid,
    tail_asymptotic,
    tail_convexity_profile,
    truncated_density_estimate,
)
from .ou_semigroup import (
    FactorizationReport,
    OUPathConfig,
    SemigroupEstimate,
    SemigroupSampler,
    TestFunction,
    ball_indicator,
    constant,
    default_n_steps,
    estimate_Ptf,
    exp_cap,
    factorization_check,
    gaussian_bump,
    matrix_exp,
    ou_noise,
    sample_ou,
)
from .harnack_lab import (
    CheckResult,
    InequalityReport,
    INEQUALITY_IDS,
    LogRatioIntegralReport,
    Node,
    NodeResult,
    RatioCase,
    classify_case,
    default_comparison_grid,
    default_ratio_grid,
    fit_constant,
    harnack_shape,
    jensen_check,
    jensen_suite,
    lemma_ratio_bound,
    log_ratio_integral_bound,
    truncated_ratio_bound,
    verify_harnack,
    verify_log_harnack,
    verify_p_harnack,
    verify_ratio_lemma,
    verify_truncated_ratio,
    young_inequality_check,
    young_suite,
)
from .reports import (
    canonical_json,
    read_samples_dump,
    validate_config,
    validate_report,
    write_report,
    write_samples_dump,
)
