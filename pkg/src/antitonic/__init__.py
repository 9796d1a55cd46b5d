"""Data-driven convex losses for linear regression via antitonic score projection.

The package turns residual samples (or known error densities) into convex
loss functions whose score is the decreasing L2 projection of the error
score, fits the resulting M-estimators, and provides asymptotically valid
confidence sets.

Layout:
    monotone          shape-constrained primitives (concave majorants, PAVA)
    densities         reference error distributions and their projected scores
    score_estimation  residuals -> kernel score -> projected monotone score
    regression        pilots, plug-in fits, cross-fitting, alternating, one-step
    inference         information estimates, covariances, intervals, ellipsoids
    cli               command-line front end (fit / simulate / experiments)
"""

from .densities import (
    ReferenceDensity,
    affine_density,
    density_from_spec,
    mixture,
    sample,
)
from .errors import (
    AntitonicError,
    DataError,
    DegenerateSampleError,
    DomainError,
    InvalidDensityError,
    InvalidInputError,
    NumericError,
    StalledSolverError,
)
from .monotone import (
    ConvexLoss,
    GridFunction,
    LcmResult,
    MonotoneScore,
    antitonic_project,
    lcm,
    negative_antiderivative,
    pava_decreasing,
)
from .score_estimation import (
    KdeModel,
    TruncationParams,
    antisymmetrize,
    empirical_score_matching_objective,
    kde,
    projected_score_estimate,
    truncated_score,
)
from .projection import (
    ProjectedScore,
    cauchy_hull_constants,
    fisher_divergence_projection,
    huber_relative_efficiency,
    projected_score_closed_form,
    projected_score_numeric,
    prop1_constants,
    prop1_ml_variance_ratio,
    two_sided_hazard,
    v_cq,
)
from .regression import (
    FitConfig,
    FitResult,
    RegressionData,
    SolverOptions,
    alternating_fit,
    asm_fit,
    asm_fit_crossfit,
    fit_intercept,
    fit_pilot,
    huber_loss,
    one_step_fit,
    solve_convex_m,
    squared_loss,
)
from .inference import (
    Ellipsoid,
    InferenceResult,
    confidence_ellipsoid,
    confidence_intervals,
    covariance_intercept,
    covariance_symmetric,
    estimate_i_star,
    estimate_i_star_pooled,
    estimate_upsilon,
    inference_summary,
)

__all__ = [
    "AntitonicError",
    "ConvexLoss",
    "DataError",
    "DegenerateSampleError",
    "DomainError",
    "Ellipsoid",
    "FitConfig",
    "FitResult",
    "GridFunction",
    "InferenceResult",
    "InvalidDensityError",
    "InvalidInputError",
    "KdeModel",
    "LcmResult",
    "MonotoneScore",
    "NumericError",
    "ProjectedScore",
    "ReferenceDensity",
    "RegressionData",
    "SolverOptions",
    "StalledSolverError",
    "TruncationParams",
    "affine_density",
    "alternating_fit",
    "antisymmetrize",
    "antitonic_project",
    "asm_fit",
    "asm_fit_crossfit",
    "cauchy_hull_constants",
    "confidence_ellipsoid",
    "confidence_intervals",
    "covariance_intercept",
    "covariance_symmetric",
    "density_from_spec",
    "empirical_score_matching_objective",
    "estimate_i_star",
    "estimate_i_star_pooled",
    "estimate_upsilon",
    "fisher_divergence_projection",
    "fit_intercept",
    "fit_pilot",
    "huber_loss",
    "huber_relative_efficiency",
    "inference_summary",
    "kde",
    "lcm",
    "mixture",
    "negative_antiderivative",
    "one_step_fit",
    "pava_decreasing",
    "projected_score_closed_form",
    "projected_score_numeric",
    "prop1_constants",
    "prop1_ml_variance_ratio",
    "sample",
    "solve_convex_m",
    "squared_loss",
    "truncated_score",
    "two_sided_hazard",
    "v_cq",
]

__version__ = "0.1.0"
