"""Count time series with exact Poisson marginal distributions.

Simulation (discrete/integer autoregressions, superposition schemes,
Gaussian copulas), particle-filter likelihood and linear-prediction
estimation, and PIT-based marginal diagnostics.
"""

__version__ = "0.1.0"

from .copula_link import (
    CorrelationBound,
    HermiteExpansion,
    correlation_bounds,
    hermite_coefficients,
    hermite_poly,
    kappa,
    link,
    min_expect_heterogeneous,
    neg_bound,
    super_neg_bound,
)
from .diagnose import (
    AcfSummary,
    PitSummary,
    ResidualSeries,
    latent_residuals,
    pit_summary,
    residual_acf,
)
from .fit import (
    FitResult,
    OptimizerConfig,
    ParticleSystem,
    fit_ghk,
    fit_linear_prediction,
    ghk_loglik,
    information_criteria,
    linear_predictions,
    make_particles,
    sample_mean_estimate,
    simulation_study,
    study_design,
    super_covariance_matrix,
)
from .generate import (
    CountSeries,
    MeanModel,
    RenewalLifetime,
    gen_cinar,
    gen_copula,
    gen_dar1,
    gen_inar1,
    gen_super_clipped,
    gen_super_renewal,
    read_series_csv,
    write_series_csv,
)
from .latent_ar import (
    FactorizationError,
    LatentAR,
    NonCausalError,
    cholesky_predictors,
    make_latent_ar,
    one_step,
    initial_state,
    prediction_coefficients,
    simulate_latent,
)
from .special import (
    DegenerateIntervalError,
    Interval,
    bessel_i,
    normal_cdf,
    normal_pdf,
    normal_quantile,
    poisson_cdf,
    poisson_quantile,
    truncated_normal_mean,
    truncated_normal_sample,
)
